//! Successive-cancellation list decoding.
//!
//! Each path keeps the usual two triangular arrays: soft values for levels
//! 1..=n (the channel level is shared) and two hard partial-sum planes
//! per level. Candidate extension, metric sorting, and pruning happen per
//! information bit; the per-stage posterior mass split between survivors
//! and discards is recorded because the error estimators are built on it.

use crate::code::{crc_check, BitVector, CodeSpec};
use crate::decoder::{g_node, pm_increment, stage_reliability, CheckNode, LLR_SAT};
use crate::{Error, Result};

/// Path metrics at one pruning stage, each list sorted ascending.
#[derive(Clone, Debug)]
pub struct StageMetric {
    pub survivors: Vec<f64>,
    pub discarded: Vec<f64>,
}

/// Result of one list pass.
#[derive(Clone, Debug)]
pub struct SclOutput {
    /// u-domain decisions of the selected path.
    pub u_hat: BitVector,
    /// Metric of the selected path.
    pub path_metric: f64,
    /// Final metrics of all surviving paths, sorted ascending.
    pub final_metrics: Vec<f64>,
    /// Index of the selected path within the sorted survivors.
    pub selected: usize,
    /// CRC verdict of the selected path when CRC-aided selection ran.
    pub crc_ok: Option<bool>,
    /// Per information position: log ratio of retained to discarded
    /// posterior mass at that decision. Infinite while the list is still
    /// filling (nothing discarded yet).
    pub stage_reliability: Vec<f64>,
    /// Raw survivor/discard metrics per information position; `None`
    /// where no pruning happened.
    pub stage_metrics: Vec<Option<StageMetric>>,
    /// First information ordinal (0-based) at which the path agreeing
    /// with the reference u-vector was discarded, if that happened.
    pub correct_path_pruned_at: Option<usize>,
    pub list_size: usize,
}

#[derive(Clone)]
struct Path {
    /// Soft values for levels 1..=n, level lambda at offset N - 2^(n-lambda+1).
    p: Vec<f64>,
    /// Two hard planes per level, same offsets doubled.
    c: Vec<u8>,
    /// Decisions so far.
    u: Vec<u8>,
    pm: f64,
    /// Whether every decision so far matches the reference u-vector.
    correct: bool,
}

/// List decoder for one block length and list size.
pub struct SclDecoder {
    block_len: usize,
    n_bits: usize,
    list_size: usize,
    check: CheckNode,
}

impl SclDecoder {
    pub fn new(block_len: usize, list_size: usize) -> Result<Self> {
        Self::with_check_node(block_len, list_size, CheckNode::Exact)
    }

    pub fn with_check_node(block_len: usize, list_size: usize, check: CheckNode) -> Result<Self> {
        if !block_len.is_power_of_two() || block_len < 2 {
            return Err(Error::Config(format!(
                "block length {block_len} is not a power of two at least 2"
            )));
        }
        if !list_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "list size {list_size} is not a power of two"
            )));
        }
        Ok(SclDecoder {
            block_len,
            n_bits: block_len.trailing_zeros() as usize,
            list_size,
            check,
        })
    }

    pub fn list_size(&self) -> usize {
        self.list_size
    }

    #[inline]
    fn level_size(&self, lambda: usize) -> usize {
        1 << (self.n_bits - lambda)
    }

    #[inline]
    fn level_off(&self, lambda: usize) -> usize {
        self.block_len - 2 * self.level_size(lambda)
    }

    /// Refreshes the soft value of level `lambda` for decision phase `phi`.
    fn calc_p(&self, path: &mut Path, chan: &[f64], lambda: usize, phi: usize) {
        if phi.is_multiple_of(2) && lambda >= 2 {
            self.calc_p(path, chan, lambda - 1, phi >> 1);
        }
        let size = self.level_size(lambda);
        let off = self.level_off(lambda);
        let (lower, upper) = path.p.split_at_mut(off);
        let src: &[f64] = if lambda == 1 {
            chan
        } else {
            // Level lambda-1 occupies the last 2*size entries below off.
            &lower[off - 2 * size..]
        };
        let dst = &mut upper[..size];
        if phi.is_multiple_of(2) {
            for w in 0..size {
                dst[w] = self
                    .check
                    .eval(src[w], src[w + size])
                    .clamp(-LLR_SAT, LLR_SAT);
            }
        } else {
            let c0 = &path.c[2 * off..2 * off + size];
            for w in 0..size {
                dst[w] = g_node(src[w], src[w + size], c0[w]).clamp(-LLR_SAT, LLR_SAT);
            }
        }
    }

    /// Propagates hard decisions upward after an odd phase at `lambda`.
    fn update_c(&self, path: &mut Path, lambda: usize, phi: usize) {
        debug_assert_eq!(phi % 2, 1);
        if lambda < 2 {
            return;
        }
        let psi = phi >> 1;
        let size = self.level_size(lambda);
        let off = self.level_off(lambda);
        let size_up = 2 * size;
        let off_up = off - size_up;
        let (lower, upper) = path.c.split_at_mut(2 * off);
        let src0 = &upper[..size];
        let src1 = &upper[size..2 * size];
        let dst = &mut lower[2 * off_up + (psi & 1) * size_up..][..size_up];
        for w in 0..size {
            dst[w] = src0[w] ^ src1[w];
            dst[w + size] = src1[w];
        }
        if psi % 2 == 1 {
            self.update_c(path, lambda - 1, psi);
        }
    }

    fn leaf_write(&self, path: &mut Path, phi: usize, bit: u8) {
        let base = 2 * (self.block_len - 2);
        path.c[base + (phi & 1)] = bit;
        path.u[phi] = bit;
        if phi % 2 == 1 {
            self.update_c(path, self.n_bits, phi);
        }
    }

    /// Decodes one block. `reference_u` is the u-vector used for the
    /// correct-path bookkeeping (all-zero when `None`); `crc_aided`
    /// switches final selection from best metric to best CRC-passing
    /// metric.
    pub fn decode(
        &self,
        spec: &CodeSpec,
        llrs: &[f64],
        reference_u: Option<&BitVector>,
        crc_aided: bool,
    ) -> Result<SclOutput> {
        if spec.block_len() != self.block_len {
            return Err(Error::Dimension {
                what: "code spec",
                expected: self.block_len,
                actual: spec.block_len(),
            });
        }
        if llrs.len() != self.block_len {
            return Err(Error::Dimension {
                what: "channel LLRs",
                expected: self.block_len,
                actual: llrs.len(),
            });
        }
        if let Some(u) = reference_u {
            if u.len() != self.block_len {
                return Err(Error::Dimension {
                    what: "reference u-vector",
                    expected: self.block_len,
                    actual: u.len(),
                });
            }
        }
        if crc_aided && spec.crc().is_none() {
            return Err(Error::Config(
                "CRC-aided selection requires a code spec with a CRC".into(),
            ));
        }

        let n = self.block_len;
        let k_total = spec.k_total();
        let info = spec.info_mask();
        let reference_bit = |idx: usize| reference_u.map_or(0, |u| u.get(idx));

        let mut paths = vec![Path {
            p: vec![0.0; n - 1],
            c: vec![0; 2 * (n - 1)],
            u: vec![0; n],
            pm: 0.0,
            correct: true,
        }];
        let mut stage_rel = vec![f64::INFINITY; k_total];
        let mut stage_metrics: Vec<Option<StageMetric>> = vec![None; k_total];
        let mut correct_path_pruned_at = None;
        let mut info_ordinal = 0usize;

        for (phi, &informational) in info.iter().enumerate() {
            for path in paths.iter_mut() {
                self.calc_p(path, llrs, self.n_bits, phi);
            }
            let leaf = n - 2; // offset of the single level-n soft value
            if !informational {
                debug_assert_eq!(reference_bit(phi), 0, "frozen bits must be zero");
                for path in paths.iter_mut() {
                    let llr = path.p[leaf];
                    path.pm += pm_increment(llr, 0);
                    self.leaf_write(path, phi, 0);
                }
                continue;
            }

            // (metric, parent, bit), sorted so the tie break is
            // metric, then parent order, then bit value.
            let mut cands: Vec<(f64, usize, u8)> = Vec::with_capacity(2 * paths.len());
            for (idx, path) in paths.iter().enumerate() {
                let llr = path.p[leaf];
                cands.push((path.pm + pm_increment(llr, 0), idx, 0));
                cands.push((path.pm + pm_increment(llr, 1), idx, 1));
            }
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

            let keep = cands.len().min(self.list_size);
            if cands.len() > self.list_size {
                let survivors: Vec<f64> = cands[..keep].iter().map(|c| c.0).collect();
                let discarded: Vec<f64> = cands[keep..].iter().map(|c| c.0).collect();
                stage_rel[info_ordinal] = stage_reliability(&survivors, &discarded);
                stage_metrics[info_ordinal] = Some(StageMetric {
                    survivors,
                    discarded,
                });
            }

            let had_correct = paths.iter().any(|p| p.correct);
            let true_bit = reference_bit(phi);
            let mut next = Vec::with_capacity(keep);
            for &(pm, parent, bit) in &cands[..keep] {
                let mut path = paths[parent].clone();
                path.pm = pm;
                path.correct = path.correct && bit == true_bit;
                self.leaf_write(&mut path, phi, bit);
                next.push(path);
            }
            if had_correct && !next.iter().any(|p| p.correct) && correct_path_pruned_at.is_none()
            {
                correct_path_pruned_at = Some(info_ordinal);
            }
            paths = next;
            info_ordinal += 1;
        }
        debug_assert_eq!(info_ordinal, k_total);

        let mut order: Vec<usize> = (0..paths.len()).collect();
        order.sort_by(|&a, &b| paths[a].pm.total_cmp(&paths[b].pm).then(a.cmp(&b)));
        let final_metrics: Vec<f64> = order.iter().map(|&i| paths[i].pm).collect();

        let (selected, crc_ok) = if crc_aided {
            let crc = spec.crc().unwrap();
            let mut hit = None;
            for (rank, &i) in order.iter().enumerate() {
                let u = BitVector::from_bits(paths[i].u.clone())?;
                let bits = spec.extract_info_bits(&u)?;
                if crc_check(&bits, crc)? {
                    hit = Some(rank);
                    break;
                }
            }
            (hit.unwrap_or(0), Some(hit.is_some()))
        } else {
            (0, None)
        };

        let chosen = &paths[order[selected]];
        Ok(SclOutput {
            u_hat: BitVector::from_bits(chosen.u.clone())?,
            path_metric: chosen.pm,
            final_metrics,
            selected,
            crc_ok,
            stage_reliability: stage_rel,
            stage_metrics,
            correct_path_pruned_at,
            list_size: self.list_size,
        })
    }
}

/// One-shot list decode.
pub fn scl_decode(
    spec: &CodeSpec,
    llrs: &[f64],
    list_size: usize,
    reference_u: Option<&BitVector>,
    crc_aided: bool,
) -> Result<SclOutput> {
    SclDecoder::new(spec.block_len(), list_size)?.decode(spec, llrs, reference_u, crc_aided)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{crc_compute, message_to_uvector, polar_encode, CrcSpec};
    use crate::decoder::{sc_decode, ScMode};
    use crate::rng::{chunk_rng, StreamDomain, StreamKey};
    use rand::Rng;

    fn rate1(n: usize) -> CodeSpec {
        CodeSpec::new(n, n, (1..=n).collect()).unwrap()
    }

    fn random_llrs(n: usize, chunk: u32) -> Vec<f64> {
        let key = StreamKey::new(StreamDomain::Test, 1, 0);
        let mut rng = chunk_rng(11, key, chunk);
        (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect()
    }

    #[test]
    fn list_of_one_matches_sc() {
        let spec = CodeSpec::new(16, 9, vec![4, 6, 7, 8, 11, 12, 13, 15, 16]).unwrap();
        let dec = SclDecoder::new(16, 1).unwrap();
        for trial in 0..200 {
            let llrs = random_llrs(16, trial);
            let sc = sc_decode(&spec, &llrs, ScMode::Practical).unwrap();
            let scl = dec.decode(&spec, &llrs, None, false).unwrap();
            assert_eq!(scl.u_hat, sc.u_hat, "trial {trial}");
            // The list metric must equal the sum of per-decision costs
            // along the SC trajectory.
            let pm_ref: f64 = (0..16)
                .map(|i| pm_increment(sc.decision_llrs[i], sc.u_hat.get(i)))
                .sum();
            assert!((scl.path_metric - pm_ref).abs() < 1e-9, "trial {trial}");
            // With a single survivor the stage reliability collapses to
            // the decision LLR magnitude.
            for (ordinal, &pos) in spec.info_set().iter().enumerate() {
                let expect = sc.decision_llrs[pos - 1].abs();
                assert!(
                    (scl.stage_reliability[ordinal] - expect).abs() < 1e-9,
                    "trial {trial} ordinal {ordinal}"
                );
            }
        }
    }

    #[test]
    fn all_zero_llrs_break_ties_toward_zero() {
        let spec = rate1(4);
        let out = scl_decode(&spec, &[0.0; 4], 2, None, false).unwrap();
        assert!(out.u_hat.is_zero());
        assert_eq!(out.selected, 0);
        for pm in &out.final_metrics {
            assert!((pm - 4.0 * 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn adversarial_llrs_prune_the_reference_path() {
        let spec = rate1(4);
        let out = scl_decode(&spec, &[-5.0; 4], 2, None, false).unwrap();
        // The all-zero reference path rides its own f/g updates (which
        // stay positive until the last g stacks all four observations)
        // and only falls off the list at the final bit. The survivor is
        // the u-domain image of the all-ones codeword.
        assert_eq!(out.correct_path_pruned_at, Some(3));
        assert_eq!(out.u_hat.as_slice(), &[0, 0, 0, 1]);
    }

    #[test]
    fn stage_metrics_partition_cleanly() {
        let spec = rate1(16);
        let list = 4;
        let out = scl_decode(&spec, &random_llrs(16, 900), list, None, false).unwrap();
        let m = list.trailing_zeros() as usize;
        for ordinal in 0..spec.k_total() {
            if ordinal < m {
                assert!(out.stage_reliability[ordinal].is_infinite());
                assert!(out.stage_metrics[ordinal].is_none());
            } else {
                let stage = out.stage_metrics[ordinal].as_ref().unwrap();
                assert_eq!(stage.survivors.len(), list);
                assert_eq!(stage.discarded.len(), list);
                let worst_kept = stage.survivors.last().unwrap();
                let best_dropped = stage.discarded.first().unwrap();
                assert!(worst_kept <= best_dropped);
                assert!(out.stage_reliability[ordinal] >= 0.0);
            }
        }
    }

    #[test]
    fn crc_selection_recovers_the_message() {
        let crc = CrcSpec::crc16();
        let info_set = vec![
            9, 10, 11, 12, 13, 14, 15, 16, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30,
            31, 32, 17,
        ];
        let spec = CodeSpec::with_options(32, 8, info_set, Some(crc), None, None, None).unwrap();
        let payload = BitVector::from_bits(vec![1, 0, 1, 1, 0, 0, 1, 0]).unwrap();
        let u = message_to_uvector(&payload, &spec).unwrap();
        let x = polar_encode(&u, &spec).unwrap();
        let mut llrs: Vec<f64> = x.iter().map(|&b| (1.0 - 2.0 * f64::from(b)) * 4.0).collect();
        // Weak corruption on a few positions.
        llrs[3] = -llrs[3] * 0.1;
        llrs[17] = -llrs[17] * 0.05;
        let out = scl_decode(&spec, &llrs, 4, Some(&u), true).unwrap();
        assert_eq!(out.crc_ok, Some(true));
        let bits = spec.extract_info_bits(&out.u_hat).unwrap();
        assert!(crc_check(&bits, spec.crc().unwrap()).unwrap());
        assert_eq!(&bits[..8], payload.as_slice());
        assert_eq!(out.correct_path_pruned_at, None);
    }

    #[test]
    fn crc_message_placement_round_trip() {
        // The CRC bits occupy the most reliable tail positions in
        // ascending order; spot-check the layout against a direct
        // computation.
        let crc = CrcSpec::crc16();
        let spec = CodeSpec::with_options(
            32,
            4,
            (13..=32).collect(),
            Some(crc.clone()),
            None,
            None,
            None,
        )
        .unwrap();
        let payload = BitVector::from_bits(vec![1, 1, 0, 1]).unwrap();
        let u = message_to_uvector(&payload, &spec).unwrap();
        let check = crc_compute(payload.as_slice(), &crc);
        for (j, &pos) in spec.info_set()[4..].iter().enumerate() {
            assert_eq!(u.get(pos - 1), check.get(j));
        }
    }
}
