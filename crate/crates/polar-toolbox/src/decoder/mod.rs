//! Successive-cancellation decoding and its list and flip variants.
//!
//! The three decoders share the same LLR conventions: positive values
//! favor bit 0, and every check/variable-node output is saturated at
//! [`LLR_SAT`] so erasure-grade certainties stay finite.

mod dscf;
mod sc;
mod scl;

use serde::{Deserialize, Serialize};

pub use dscf::{dscf_decode, flip_metric_logs, DscfConfig, DscfOutput};
pub use sc::{sc_decode, ScDecoder, ScMode, ScOutput};
pub use scl::{scl_decode, SclDecoder, SclOutput, StageMetric};

/// Saturation bound for decoder-internal LLRs.
pub const LLR_SAT: f64 = 300.0;

/// Check-node update rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckNode {
    /// Exact boxplus, evaluated in a numerically stable form.
    #[default]
    Exact,
    /// Min-sum approximation. Cheaper and slightly pessimistic; never
    /// used by the construction routines.
    MinSum,
}

impl CheckNode {
    #[inline]
    pub fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            CheckNode::Exact => check_node_exact(a, b),
            CheckNode::MinSum => check_node_min_sum(a, b),
        }
    }
}

/// Exact boxplus: 2 atanh(tanh(a/2) tanh(b/2)), computed without the
/// transcendental round trip.
#[inline]
pub fn check_node_exact(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) ^ (b < 0.0) { -1.0 } else { 1.0 };
    let (abs_a, abs_b) = (a.abs(), b.abs());
    let min = abs_a.min(abs_b);
    sign * (min + (-(abs_a + abs_b)).exp().ln_1p() - (-(abs_a - abs_b).abs()).exp().ln_1p())
}

#[inline]
pub fn check_node_min_sum(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) ^ (b < 0.0) { -1.0 } else { 1.0 };
    sign * a.abs().min(b.abs())
}

/// Variable-node update with a known upper-branch bit.
#[inline]
pub fn g_node(a: f64, b: f64, u: u8) -> f64 {
    if u == 0 {
        b + a
    } else {
        b - a
    }
}

/// ln(1 + e^{-x}), stable over the whole f64 range.
#[inline]
pub fn softplus_neg(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Path-metric increment for deciding `bit` against LLR `llr`:
/// ln(1 + e^{-(1-2u)L}). Zero cost only in the limit of an LLR that
/// agrees with the decision with full confidence.
#[inline]
pub fn pm_increment(llr: f64, bit: u8) -> f64 {
    if bit == 0 {
        softplus_neg(llr)
    } else {
        softplus_neg(-llr)
    }
}

/// ln sum(e^{-pm}) over a slice of path metrics, shifted so the largest
/// addend is exactly one.
fn lse_neg(pms: &[f64]) -> f64 {
    let m = pms.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = pms.iter().map(|&pm| (m - pm).exp()).sum();
    -m + sum.ln()
}

/// Aggregate reliability of a list-pruning stage: the log ratio of
/// retained to discarded posterior mass,
/// ln(sum_surv e^{-PM} / sum_disc e^{-PM}).
///
/// When nothing was discarded (the list is still filling) no mass was
/// lost and the stage is perfectly reliable; this is reported as
/// infinity and clipped by consumers.
pub fn stage_reliability(survivors: &[f64], discarded: &[f64]) -> f64 {
    if discarded.is_empty() {
        return f64::INFINITY;
    }
    debug_assert!(!survivors.is_empty());
    lse_neg(survivors) - lse_neg(discarded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_check_node_value() {
        assert!((check_node_exact(2.0, 3.0) - 1.6934536609708954).abs() < 1e-12);
        assert!((check_node_exact(-2.0, 3.0) + 1.6934536609708954).abs() < 1e-12);
        assert!((check_node_exact(2.0, -3.0) + 1.6934536609708954).abs() < 1e-12);
        assert!((check_node_exact(-2.0, -3.0) - 1.6934536609708954).abs() < 1e-12);
    }

    #[test]
    fn check_node_absorbs_erasures() {
        for b in [-7.0, -0.3, 0.4, 12.0] {
            assert_eq!(check_node_exact(0.0, b), 0.0);
            assert_eq!(check_node_exact(b, 0.0), 0.0);
        }
    }

    #[test]
    fn min_sum_value() {
        assert_eq!(check_node_min_sum(2.0, 3.0), 2.0);
        assert_eq!(check_node_min_sum(-2.0, 3.0), -2.0);
        assert_eq!(check_node_min_sum(0.5, -0.25), -0.25);
    }

    #[test]
    fn g_node_values() {
        assert_eq!(g_node(2.0, 3.0, 0), 5.0);
        assert_eq!(g_node(2.0, 3.0, 1), 1.0);
        assert_eq!(g_node(-1.5, 0.5, 1), 2.0);
    }

    #[test]
    fn pm_increment_values() {
        assert!((pm_increment(2.0, 0) - 0.1269280110429726).abs() < 1e-12);
        assert!((pm_increment(2.0, 1) - 2.1269280110429727).abs() < 1e-12);
        assert!((pm_increment(0.0, 0) - 2f64.ln()).abs() < 1e-15);
        assert!((pm_increment(0.0, 1) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus_neg(1000.0), 0.0);
        assert!((softplus_neg(-1000.0) - 1000.0).abs() < 1e-9);
        assert!(softplus_neg(300.0).is_finite());
    }

    #[test]
    fn stage_reliability_value() {
        let got = stage_reliability(&[0.1, 0.2], &[1.0, 1.5]);
        assert!((got - 1.0703196758934643).abs() < 1e-12);
    }

    #[test]
    fn stage_reliability_singletons() {
        // With one survivor and one discard the stage reliability is the
        // raw metric gap.
        assert!((stage_reliability(&[0.1], &[2.1]) - 2.0).abs() < 1e-12);
        // A better discarded path gives a negative reliability.
        assert!((stage_reliability(&[2.1], &[0.1]) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn stage_reliability_without_discards_is_infinite() {
        assert_eq!(stage_reliability(&[0.5], &[]), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn exact_matches_tanh_product(a in -20.0f64..20.0, b in -20.0f64..20.0) {
            let reference = 2.0 * ((a / 2.0).tanh() * (b / 2.0).tanh()).atanh();
            let got = check_node_exact(a, b);
            prop_assert!((got - reference).abs() < 1e-9 * (1.0 + reference.abs()));
        }

        #[test]
        fn exact_is_dominated_by_min_sum(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let exact = check_node_exact(a, b);
            let ms = check_node_min_sum(a, b);
            prop_assert!(exact.abs() <= ms.abs() + 1e-12);
            if ms != 0.0 {
                prop_assert!(exact * ms >= 0.0);
            }
        }

        #[test]
        fn pm_increments_differ_by_the_llr(l in -100.0f64..100.0) {
            let gap = pm_increment(l, 1) - pm_increment(l, 0);
            prop_assert!((gap - l).abs() < 1e-9 * (1.0 + l.abs()));
        }
    }
}
