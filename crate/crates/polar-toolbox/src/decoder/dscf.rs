//! CRC-gated SC flip decoding.
//!
//! After a failed SC pass the decoder ranks information positions by how
//! plausible it is that the first wrong decision happened there, then
//! retries with that single decision inverted until the CRC passes or the
//! attempt budget runs out. The ranking metric discounts raw LLR
//! magnitude by the chance that all earlier decisions were correct, with
//! a temperature-like parameter `alpha` controlling the discount.

use crate::code::{crc_check, BitVector, CodeSpec};
use crate::decoder::{softplus_neg, ScDecoder, ScMode};
use crate::{Error, Result};

/// Flip-decoder settings.
#[derive(Clone, Debug)]
pub struct DscfConfig {
    /// Scaling applied to LLR magnitudes inside the ranking metric.
    pub alpha: f64,
    /// Maximum number of single-flip retries.
    pub attempts: usize,
    /// Restrict flip candidates to these u-domain positions (1-based,
    /// must be information positions). `None` means every information
    /// position is a candidate.
    pub candidate_set: Option<Vec<usize>>,
    /// Threshold that produced `candidate_set`, recorded for reporting
    /// only.
    pub gamma: Option<f64>,
}

impl Default for DscfConfig {
    fn default() -> Self {
        DscfConfig {
            alpha: 0.3367,
            attempts: 10,
            candidate_set: None,
            gamma: None,
        }
    }
}

/// Result of a flip-decoding pass.
#[derive(Clone, Debug)]
pub struct DscfOutput {
    /// u-domain decisions of the returned pass.
    pub u_hat: BitVector,
    /// Information bits (payload plus CRC) of the returned pass.
    pub info_bits: Vec<u8>,
    /// Whether those bits pass the CRC.
    pub crc_ok: bool,
    /// Number of flip retries that ran (0 when the first pass already
    /// checked out).
    pub attempts_used: usize,
    /// Position flipped in the returned pass, if any.
    pub flipped: Option<usize>,
}

/// Log of the flip-ranking metric for every information position, given
/// the decision LLRs of the initial pass. Returned in information-set
/// order as `(position, ln metric)`.
pub fn flip_metric_logs(
    decision_llrs: &[f64],
    info_set: &[usize],
    alpha: f64,
) -> Vec<(usize, f64)> {
    let mut running = 0.0;
    info_set
        .iter()
        .map(|&pos| {
            let mag = decision_llrs[pos - 1].abs();
            running += softplus_neg(alpha * mag);
            (pos, -alpha * mag - running)
        })
        .collect()
}

/// SC decoding with single-bit flip retries gated by the CRC.
pub fn dscf_decode(
    spec: &CodeSpec,
    llrs: &[f64],
    config: &DscfConfig,
    decoder: &mut ScDecoder,
) -> Result<DscfOutput> {
    let crc = spec
        .crc()
        .ok_or_else(|| Error::Config("flip decoding requires a code spec with a CRC".into()))?;
    if config.alpha <= 0.0 || config.alpha.is_nan() {
        return Err(Error::Config(format!(
            "flip metric scale {} must be positive",
            config.alpha
        )));
    }
    if let Some(cands) = &config.candidate_set {
        for &pos in cands {
            if pos == 0 || pos > spec.block_len() || !spec.is_info(pos) {
                return Err(Error::Config(format!(
                    "flip candidate {pos} is not an information position"
                )));
            }
        }
    }

    let initial = decoder.decode(spec, llrs, ScMode::Practical)?;
    let info_bits = initial.info_bits(spec)?;
    if crc_check(&info_bits, crc)? {
        return Ok(DscfOutput {
            u_hat: initial.u_hat,
            info_bits,
            crc_ok: true,
            attempts_used: 0,
            flipped: None,
        });
    }

    let mut ranked = flip_metric_logs(&initial.decision_llrs, spec.info_set(), config.alpha);
    if let Some(cands) = &config.candidate_set {
        ranked.retain(|(pos, _)| cands.contains(pos));
    }
    // Most plausible first; ties go to the earlier position.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let budget = config.attempts.min(ranked.len());
    let mut tried = 0;
    for &(pos, _) in &ranked[..budget] {
        tried += 1;
        let retry = decoder.decode(spec, llrs, ScMode::FlipOne { position: pos })?;
        let bits = retry.info_bits(spec)?;
        if crc_check(&bits, crc)? {
            return Ok(DscfOutput {
                u_hat: retry.u_hat,
                info_bits: bits,
                crc_ok: true,
                attempts_used: tried,
                flipped: Some(pos),
            });
        }
    }

    Ok(DscfOutput {
        u_hat: initial.u_hat,
        info_bits,
        crc_ok: false,
        attempts_used: tried,
        flipped: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::CrcSpec;

    fn crc_spec(block_len: usize, payload_len: usize, info_set: Vec<usize>) -> CodeSpec {
        CodeSpec::with_options(
            block_len,
            payload_len,
            info_set,
            Some(CrcSpec::crc16()),
            None,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn metric_value_for_a_single_position() {
        let mut llrs = vec![0.0; 8];
        llrs[5] = 4.0;
        let logs = flip_metric_logs(&llrs, &[6], 0.3367);
        assert_eq!(logs.len(), 1);
        assert_eq!(logs[0].0, 6);
        assert!((logs[0].1.exp() - 0.20639402506211102).abs() < 1e-12);
    }

    #[test]
    fn metric_discounts_later_positions() {
        // Equal LLR magnitudes: earlier positions must rank at least as
        // plausible because the prefix product only shrinks.
        let llrs = vec![2.0; 16];
        let info: Vec<usize> = (1..=16).collect();
        let logs = flip_metric_logs(&llrs, &info, 0.3367);
        for w in logs.windows(2) {
            assert!(w[0].1 > w[1].1);
        }
    }

    #[test]
    fn clean_input_passes_without_flips() {
        let spec = crc_spec(32, 8, (9..=32).collect());
        let payload = BitVector::from_bits(vec![0, 1, 1, 0, 1, 0, 0, 1]).unwrap();
        let u = crate::code::message_to_uvector(&payload, &spec).unwrap();
        let x = crate::code::polar_encode(&u, &spec).unwrap();
        let llrs: Vec<f64> = x.iter().map(|&b| (1.0 - 2.0 * f64::from(b)) * 6.0).collect();
        let mut dec = ScDecoder::new(32).unwrap();
        let out = dscf_decode(&spec, &llrs, &DscfConfig::default(), &mut dec).unwrap();
        assert!(out.crc_ok);
        assert_eq!(out.attempts_used, 0);
        assert_eq!(out.flipped, None);
        assert_eq!(&out.info_bits[..8], payload.as_slice());
    }

    /// Finds noise for the all-zero codeword where the known-feedback SC
    /// trace has exactly one wrong information decision and plain SC
    /// fails the CRC. Flipping that decision then reproduces the
    /// known-feedback trace, so a flip decoder given enough attempts is
    /// guaranteed to repair the block.
    fn single_error_fixture() -> (CodeSpec, Vec<f64>, usize) {
        use crate::channel::{channel_llr, transmit, ChannelModel};
        use crate::rng::{chunk_rng, StreamDomain, StreamKey};

        let spec = crc_spec(64, 16, (33..=64).collect());
        let channel = ChannelModel::Awgn { esn0_db: 1.0 };
        let zero = BitVector::zeros(64);
        let mut dec = ScDecoder::new(64).unwrap();
        let key = StreamKey::new(StreamDomain::Test, 2, 0);
        for chunk in 0..500 {
            let mut rng = chunk_rng(5, key, chunk);
            let y = transmit(&zero, &channel, &mut rng);
            let llrs = channel_llr(&y, &channel).unwrap();
            let genie = dec
                .decode(&spec, &llrs, ScMode::Genie { true_u: &zero })
                .unwrap();
            let wrong: Vec<usize> = spec
                .info_set()
                .iter()
                .copied()
                .filter(|&pos| genie.decision_llrs[pos - 1] < 0.0)
                .collect();
            if wrong.len() != 1 {
                continue;
            }
            let plain = dec.decode(&spec, &llrs, ScMode::Practical).unwrap();
            let bits = plain.info_bits(&spec).unwrap();
            if crc_check(&bits, spec.crc().unwrap()).unwrap() {
                continue;
            }
            return (spec, llrs, wrong[0]);
        }
        panic!("no single-error noise realization found");
    }

    #[test]
    fn recovers_from_one_bad_decision() {
        let (spec, llrs, needed) = single_error_fixture();
        let mut dec = ScDecoder::new(64).unwrap();
        let config = DscfConfig {
            attempts: spec.k_total(),
            ..DscfConfig::default()
        };
        let out = dscf_decode(&spec, &llrs, &config, &mut dec).unwrap();
        assert!(out.crc_ok);
        assert!(out.attempts_used >= 1);
        assert_eq!(out.flipped, Some(needed));
        assert!(out.u_hat.is_zero());
    }

    #[test]
    fn candidate_set_gates_the_repair() {
        let (spec, llrs, needed) = single_error_fixture();
        let mut dec = ScDecoder::new(64).unwrap();

        let without = DscfConfig {
            attempts: spec.k_total(),
            candidate_set: Some(
                spec.info_set()
                    .iter()
                    .copied()
                    .filter(|&p| p != needed)
                    .collect(),
            ),
            ..DscfConfig::default()
        };
        let blocked = dscf_decode(&spec, &llrs, &without, &mut dec).unwrap();
        assert!(!blocked.crc_ok);

        let with = DscfConfig {
            candidate_set: Some(vec![needed]),
            ..DscfConfig::default()
        };
        let allowed = dscf_decode(&spec, &llrs, &with, &mut dec).unwrap();
        assert!(allowed.crc_ok);
        assert_eq!(allowed.flipped, Some(needed));
        assert_eq!(allowed.attempts_used, 1);
    }

    #[test]
    fn rejects_specs_without_crc() {
        let spec = CodeSpec::new(8, 4, vec![4, 6, 7, 8]).unwrap();
        let mut dec = ScDecoder::new(8).unwrap();
        let err = dscf_decode(&spec, &[1.0; 8], &DscfConfig::default(), &mut dec);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_frozen_candidates() {
        let spec = crc_spec(32, 8, (9..=32).collect());
        let config = DscfConfig {
            candidate_set: Some(vec![1]),
            ..DscfConfig::default()
        };
        let mut dec = ScDecoder::new(32).unwrap();
        assert!(dscf_decode(&spec, &[1.0; 32], &config, &mut dec).is_err());
    }
}
