//! Information-set construction.
//!
//! Four families are provided. Two are classical closed-form rules
//! (Bhattacharyya parameter doubling and the Gaussian approximation of
//! density evolution), one is the Reed-Muller hybrid that fills whole
//! row-weight classes before consulting reliabilities, and one is a
//! greedy search that freezes whichever position the error-profile
//! estimator blames most, one position per round.
//!
//! All constructions return a [`CodeSpec`] carrying its design point,
//! the method name, and enough parameters to reproduce the run.

use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::PI;

use crate::channel::ChannelModel;
use crate::code::{CodeSpec, CrcSpec};
use crate::estimator::{
    estimate, EstimateMode, EstimateOptions, EstimatorDecoder, StopRule, STAGE_CLIP,
};
use crate::rng::StreamDomain;
use crate::sequences::nr_info_set;
use crate::{Error, Result};

/// Starting Bhattacharyya parameter of the raw channel.
pub fn bhattacharyya_initial(channel: &ChannelModel) -> Result<f64> {
    channel.validate()?;
    Ok(match *channel {
        ChannelModel::Bec { erasure_prob } => erasure_prob,
        ChannelModel::Bsc { p } => 2.0 * (p * (1.0 - p)).sqrt(),
        ChannelModel::Awgn { esn0_db } => (-(10f64.powf(esn0_db / 10.0))).exp(),
    })
}

/// Bhattacharyya parameters of all synthesized channels, position order.
/// Each doubling maps a parameter z to (2z - z^2, z^2): the first branch
/// absorbs two channels' noise, the second sees the other input as known.
pub fn bhattacharyya_parameters(block_len: usize, initial: f64) -> Result<Vec<f64>> {
    if !block_len.is_power_of_two() || block_len < 2 {
        return Err(Error::Config(format!(
            "block length {block_len} is not a power of two >= 2"
        )));
    }
    if !(0.0..=1.0).contains(&initial) {
        return Err(Error::Config(format!(
            "Bhattacharyya parameter {initial} outside [0, 1]"
        )));
    }
    let mut z = vec![initial];
    while z.len() < block_len {
        let mut next = Vec::with_capacity(z.len() * 2);
        for &v in &z {
            next.push(2.0 * v - v * v);
            next.push(v * v);
        }
        z = next;
    }
    Ok(z)
}

/// Picks the `k_total` most reliable positions by Bhattacharyya
/// parameter. Ties go to the higher position index.
pub fn construct_bhattacharyya(
    block_len: usize,
    k_total: usize,
    channel: &ChannelModel,
) -> Result<CodeSpec> {
    let initial = bhattacharyya_initial(channel)?;
    let z = bhattacharyya_parameters(block_len, initial)?;
    let info_set = select_best(block_len, k_total, |i| -z[i - 1]);
    CodeSpec::with_options(
        block_len,
        k_total,
        info_set,
        None,
        Some(*channel),
        Some("bhattacharyya".into()),
        Some(json!({ "initial": initial })),
    )
}

/// The Gaussian-approximation transfer function for LLR mean `x`.
fn phi(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        1.0
    } else if x < 10.0 {
        (-0.4527 * x.powf(0.86) + 0.0218).exp()
    } else {
        (PI / x).sqrt() * (-x / 4.0).exp() * (1.0 - 10.0 / (7.0 * x))
    }
}

/// Inverts [`phi`] by bisection. The function is decreasing, so a plain
/// bracket-and-halve converges; 1e-9 on the argument is far below the
/// resolution the construction needs.
fn phi_inv(target: f64) -> f64 {
    debug_assert!(target >= 0.0);
    let mut hi = 1.0;
    let mut doublings = 0;
    while phi(hi) > target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-9 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if phi(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// LLR means of all synthesized channels under the Gaussian
/// approximation, position order. The variable-node branch doubles the
/// mean; the check-node branch passes through phi and back.
pub fn ga_means(block_len: usize, esn0_db: f64) -> Result<Vec<f64>> {
    if !block_len.is_power_of_two() || block_len < 2 {
        return Err(Error::Config(format!(
            "block length {block_len} is not a power of two >= 2"
        )));
    }
    let sigma2 = ChannelModel::Awgn { esn0_db }.awgn_sigma2().unwrap();
    let m0 = 2.0 / sigma2;
    let mut m = vec![m0];
    while m.len() < block_len {
        let mut next = Vec::with_capacity(m.len() * 2);
        for &v in &m {
            let p = phi(v);
            next.push(phi_inv(1.0 - (1.0 - p) * (1.0 - p)));
            next.push(2.0 * v);
        }
        m = next;
    }
    Ok(m)
}

/// Tail-probability proxy for a decision with LLR mean `m`: the chance a
/// Gaussian with that mean and variance 2m lands below zero.
pub fn ga_proxy_error(mean: f64) -> f64 {
    0.5 * erfc((mean / 2.0).sqrt() / std::f64::consts::SQRT_2)
}

/// Complementary error function, Abramowitz-Stegun style rational fit.
/// Absolute error under 1.5e-7, which is plenty for reporting proxies.
fn erfc(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let tail = poly * (-x * x).exp();
    if x >= 0.0 {
        tail
    } else {
        2.0 - tail
    }
}

/// Picks the `k_total` positions with the largest approximate LLR means
/// for a binary-input Gaussian channel at `esn0_db`. Ties go to the
/// higher position index.
pub fn construct_ga(block_len: usize, k_total: usize, esn0_db: f64) -> Result<CodeSpec> {
    let means = ga_means(block_len, esn0_db)?;
    let info_set = select_best(block_len, k_total, |i| means[i - 1]);
    CodeSpec::with_options(
        block_len,
        k_total,
        info_set,
        None,
        Some(ChannelModel::Awgn { esn0_db }),
        Some("gaussian-approximation".into()),
        Some(json!({ "esn0_db": esn0_db })),
    )
}

/// Hamming weights of the transform rows, position order. Position i has
/// weight 2 to the popcount of i - 1.
pub fn row_weights(block_len: usize) -> Result<Vec<u64>> {
    if !block_len.is_power_of_two() || block_len < 2 {
        return Err(Error::Config(format!(
            "block length {block_len} is not a power of two >= 2"
        )));
    }
    Ok((0..block_len as u64).map(|i| 1 << i.count_ones()).collect())
}

/// Reed-Muller flavored construction: whole row-weight classes are taken
/// from the heaviest down, and the one class that only partially fits is
/// ranked by channel reliability (Gaussian-approximation means for a
/// Gaussian design point, Bhattacharyya parameters otherwise).
pub fn construct_rm_polar(
    block_len: usize,
    k_total: usize,
    channel: &ChannelModel,
) -> Result<CodeSpec> {
    let weights = row_weights(block_len)?;
    if k_total == 0 || k_total > block_len {
        return Err(Error::Config(format!(
            "information set of {k_total} entries for N = {block_len}"
        )));
    }
    let reliability: Vec<f64> = match *channel {
        ChannelModel::Awgn { esn0_db } => ga_means(block_len, esn0_db)?,
        _ => bhattacharyya_parameters(block_len, bhattacharyya_initial(channel)?)?
            .into_iter()
            .map(|z| -z)
            .collect(),
    };

    let mut classes: Vec<u64> = weights.clone();
    classes.sort_unstable();
    classes.dedup();
    let mut info_set = Vec::with_capacity(k_total);
    for &w in classes.iter().rev() {
        let mut members: Vec<usize> = (1..=block_len).filter(|&i| weights[i - 1] == w).collect();
        let room = k_total - info_set.len();
        if members.len() <= room {
            info_set.extend(members);
        } else {
            members.sort_by(|&a, &b| {
                reliability[b - 1]
                    .total_cmp(&reliability[a - 1])
                    .then(b.cmp(&a))
            });
            info_set.extend(members.into_iter().take(room));
        }
        if info_set.len() == k_total {
            break;
        }
    }

    CodeSpec::with_options(
        block_len,
        k_total,
        info_set,
        None,
        Some(*channel),
        Some("rm-polar".into()),
        None,
    )
}

/// Builds a spec from the standardized cellular reliability sequence.
pub fn construct_nr(block_len: usize, k_total: usize) -> Result<CodeSpec> {
    let info_set = nr_info_set(block_len, k_total)?;
    CodeSpec::with_options(
        block_len,
        k_total,
        info_set,
        None,
        None,
        Some("nr-sequence".into()),
        None,
    )
}

/// Interprets user-supplied indices either as a reliability sequence
/// (when they permute 1..=len for len >= N, ascending reliability) or as
/// an explicit information set (when exactly k_total values are given).
pub fn import_sequence(block_len: usize, k_total: usize, values: &[usize]) -> Result<CodeSpec> {
    let len = values.len();
    let is_permutation = len >= block_len && {
        let mut seen = vec![false; len];
        values.iter().all(|&v| {
            v >= 1 && v <= len && !std::mem::replace(&mut seen[v - 1], true)
        })
    };
    let (info_set, method) = if is_permutation {
        let filtered: Vec<usize> = values.iter().copied().filter(|&v| v <= block_len).collect();
        if k_total > filtered.len() {
            return Err(Error::Config(format!(
                "cannot pick {k_total} positions out of {}",
                filtered.len()
            )));
        }
        (
            filtered[filtered.len() - k_total..].to_vec(),
            "imported-sequence",
        )
    } else if len == k_total {
        (values.to_vec(), "imported-set")
    } else {
        return Err(Error::Config(format!(
            "expected a reliability permutation of length >= {block_len} or exactly \
             {k_total} information positions, got {len} values"
        )));
    };
    CodeSpec::with_options(
        block_len,
        k_total,
        info_set,
        None,
        None,
        Some(method.into()),
        None,
    )
}

/// One round of the greedy search: which position was frozen and what
/// the estimator said about it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FreezeStep {
    pub iteration: usize,
    pub frozen_index: usize,
    pub estimate: f64,
    pub samples: u64,
    pub errors: u64,
}

/// A greedy construction together with its audit trail.
#[derive(Clone, Debug)]
pub struct OptimizedBuild {
    pub spec: CodeSpec,
    pub audit: Vec<FreezeStep>,
}

/// Sampling budget for each round of the greedy search.
#[derive(Clone, Copy, Debug)]
pub struct OptimizeOptions {
    pub stop: StopRule,
    pub seed: u64,
    pub lane: u16,
    pub chunk_size: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            stop: StopRule {
                target_errors: 100,
                max_samples: 200_000,
            },
            seed: 0,
            lane: 0,
            chunk_size: 256,
        }
    }
}

/// Greedy search driven by the plain successive-cancellation profile.
pub fn construct_sc_optimized(
    block_len: usize,
    k_total: usize,
    channel: &ChannelModel,
    options: &OptimizeOptions,
) -> Result<OptimizedBuild> {
    optimize(block_len, k_total, channel, EstimatorDecoder::Sc, options)
}

/// Greedy search driven by the list-decoder profile.
pub fn construct_scl_optimized(
    block_len: usize,
    k_total: usize,
    list_size: usize,
    channel: &ChannelModel,
    options: &OptimizeOptions,
) -> Result<OptimizedBuild> {
    optimize(
        block_len,
        k_total,
        channel,
        EstimatorDecoder::Scl { list_size },
        options,
    )
}

fn optimize(
    block_len: usize,
    k_total: usize,
    channel: &ChannelModel,
    decoder: EstimatorDecoder,
    options: &OptimizeOptions,
) -> Result<OptimizedBuild> {
    if k_total == 0 || k_total > block_len {
        return Err(Error::Config(format!(
            "information set of {k_total} entries for N = {block_len}"
        )));
    }
    let rounds = block_len - k_total;
    if rounds > usize::from(u16::MAX) {
        return Err(Error::Config(
            "search depth exceeds the available stream slots".into(),
        ));
    }

    let mut info: Vec<usize> = (1..=block_len).collect();
    let mut audit: Vec<FreezeStep> = Vec::with_capacity(rounds);
    for iteration in 0..rounds {
        let spec = CodeSpec::new(block_len, info.len(), info.clone())?;
        let estimate_options = EstimateOptions {
            mode: EstimateMode::Practical,
            decoder,
            crc_aided: false,
            stop: options.stop,
            chunk_size: options.chunk_size,
            seed: options.seed,
            domain: StreamDomain::Construction,
            lane: options.lane,
            slot: iteration as u16,
            clip: STAGE_CLIP,
            check_node: Default::default(),
            random_payload: false,
            collect_outcomes: false,
        };
        let report = estimate(&spec, channel, &estimate_options)?;
        if !report.converged {
            return Err(Error::NotConverged {
                iteration,
                samples: report.summary.samples,
                errors: report.summary.errors,
            });
        }
        let mut worst = 0usize;
        for (ord, &e) in report.summary.estimates.iter().enumerate() {
            if e > report.summary.estimates[worst] {
                worst = ord;
            }
        }
        let frozen_index = info[worst];
        audit.push(FreezeStep {
            iteration,
            frozen_index,
            estimate: report.summary.estimates[worst],
            samples: report.summary.samples,
            errors: report.summary.errors,
        });
        info.remove(worst);
    }

    let method = match decoder {
        EstimatorDecoder::Sc => "sc-optimized",
        EstimatorDecoder::Scl { .. } => "scl-optimized",
    };
    let mut params = json!({
        "seed": options.seed,
        "target_errors": options.stop.target_errors,
        "max_samples": options.stop.max_samples,
        "audit": audit,
    });
    if let EstimatorDecoder::Scl { list_size } = decoder {
        params["list_size"] = json!(list_size);
    }
    let spec = CodeSpec::with_options(
        block_len,
        k_total,
        info,
        None,
        Some(*channel),
        Some(method.into()),
        Some(params),
    )?;
    Ok(OptimizedBuild { spec, audit })
}

/// Attaches a CRC to an existing construction, keeping its information
/// set and metadata. The payload shrinks by the CRC width.
pub fn with_crc(spec: &CodeSpec, crc: CrcSpec) -> Result<CodeSpec> {
    if spec.k_total() <= crc.width {
        return Err(Error::Config(format!(
            "{}-bit CRC leaves no payload in a {}-bit information set",
            crc.width,
            spec.k_total()
        )));
    }
    CodeSpec::with_options(
        spec.block_len(),
        spec.k_total() - crc.width,
        spec.info_set().to_vec(),
        Some(crc),
        spec.design_point().cloned(),
        spec.construction_method().map(str::to_owned),
        spec.construction_params().cloned(),
    )
}

/// Top `k_total` positions by `score`, ties resolved toward the higher
/// index, returned ascending.
fn select_best<F: Fn(usize) -> f64>(block_len: usize, k_total: usize, score: F) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=block_len).collect();
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(b.cmp(&a)));
    let mut chosen: Vec<usize> = order.into_iter().take(k_total).collect();
    chosen.sort_unstable();
    chosen
}
