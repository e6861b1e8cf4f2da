//! Channel models and LLR computation.
//!
//! All models assume BPSK-style transmission of codeword bits and produce
//! log-likelihood ratios with the convention that a positive LLR favors
//! bit 0. The AWGN model maps a bit `x` to the unit-energy symbol
//! `s = 1 - 2x` and reports Es/N0 in dB; the BSC and BEC are parameterized
//! directly by their crossover and erasure probabilities.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::code::BitVector;
use crate::{Error, Result};

/// Magnitude used for fully known BEC outputs. Decoders saturate at the
/// same value, so erasure-free positions behave as certainties without
/// producing infinities.
pub const BEC_LLR: f64 = 300.0;

/// Channel family plus its single design parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ChannelModel {
    Awgn { esn0_db: f64 },
    Bsc { p: f64 },
    Bec { erasure_prob: f64 },
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelModel::Awgn { esn0_db } => {
                if !esn0_db.is_finite() {
                    return Err(Error::Config("Es/N0 must be finite".into()));
                }
            }
            ChannelModel::Bsc { p } => {
                if !(p > 0.0 && p < 0.5) {
                    return Err(Error::Config(format!(
                        "BSC crossover probability {p} outside (0, 0.5)"
                    )));
                }
            }
            ChannelModel::Bec { erasure_prob } => {
                if !(erasure_prob > 0.0 && erasure_prob < 1.0) {
                    return Err(Error::Config(format!(
                        "BEC erasure probability {erasure_prob} outside (0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Noise variance per real dimension for the AWGN model.
    pub fn awgn_sigma2(&self) -> Option<f64> {
        match *self {
            ChannelModel::Awgn { esn0_db } => Some(1.0 / (2.0 * 10f64.powf(esn0_db / 10.0))),
            _ => None,
        }
    }

    pub fn channel_type(&self) -> &'static str {
        match self {
            ChannelModel::Awgn { .. } => "awgn",
            ChannelModel::Bsc { .. } => "bsc",
            ChannelModel::Bec { .. } => "bec",
        }
    }

    /// The scalar design parameter (Es/N0 in dB, crossover, or erasure
    /// probability).
    pub fn parameter(&self) -> f64 {
        match *self {
            ChannelModel::Awgn { esn0_db } => esn0_db,
            ChannelModel::Bsc { p } => p,
            ChannelModel::Bec { erasure_prob } => erasure_prob,
        }
    }

    /// Same channel family with a different design parameter.
    pub fn with_parameter(&self, value: f64) -> ChannelModel {
        match self {
            ChannelModel::Awgn { .. } => ChannelModel::Awgn { esn0_db: value },
            ChannelModel::Bsc { .. } => ChannelModel::Bsc { p: value },
            ChannelModel::Bec { .. } => ChannelModel::Bec {
                erasure_prob: value,
            },
        }
    }

    /// True for channels with a finite output alphabet, where exhaustive
    /// enumeration is possible.
    pub fn is_finite(&self) -> bool {
        !matches!(self, ChannelModel::Awgn { .. })
    }
}

impl std::fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            ChannelModel::Awgn { esn0_db } => write!(f, "awgn({esn0_db} dB)"),
            ChannelModel::Bsc { p } => write!(f, "bsc(p={p})"),
            ChannelModel::Bec { erasure_prob } => write!(f, "bec(e={erasure_prob})"),
        }
    }
}

/// Raw channel output for one codeword.
#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    /// Received real values, one per bit.
    Awgn(Vec<f64>),
    /// Possibly flipped hard bits.
    Bsc(BitVector),
    /// Hard bits with erasures marked `None`.
    Bec(Vec<Option<u8>>),
}

impl Observation {
    pub fn len(&self) -> usize {
        match self {
            Observation::Awgn(v) => v.len(),
            Observation::Bsc(v) => v.len(),
            Observation::Bec(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sends a codeword through the channel, drawing noise from `rng`.
pub fn transmit<R: Rng>(x: &BitVector, channel: &ChannelModel, rng: &mut R) -> Observation {
    match *channel {
        ChannelModel::Awgn { .. } => {
            let sigma = channel.awgn_sigma2().unwrap().sqrt();
            let values = x
                .iter()
                .map(|&bit| {
                    let s = 1.0 - 2.0 * f64::from(bit);
                    let z: f64 = rng.sample(StandardNormal);
                    s + sigma * z
                })
                .collect();
            Observation::Awgn(values)
        }
        ChannelModel::Bsc { p } => {
            let mut out = x.clone();
            for i in 0..out.len() {
                if rng.gen::<f64>() < p {
                    out.set(i, out.get(i) ^ 1);
                }
            }
            Observation::Bsc(out)
        }
        ChannelModel::Bec { erasure_prob } => {
            let values = x
                .iter()
                .map(|&bit| {
                    if rng.gen::<f64>() < erasure_prob {
                        None
                    } else {
                        Some(bit)
                    }
                })
                .collect();
            Observation::Bec(values)
        }
    }
}

/// Per-bit channel LLRs for an observation.
pub fn channel_llr(y: &Observation, channel: &ChannelModel) -> Result<Vec<f64>> {
    match (y, channel) {
        (Observation::Awgn(values), ChannelModel::Awgn { .. }) => {
            let sigma2 = channel.awgn_sigma2().unwrap();
            Ok(values.iter().map(|v| 2.0 * v / sigma2).collect())
        }
        (Observation::Bsc(bits), ChannelModel::Bsc { p }) => {
            let mag = ((1.0 - p) / p).ln();
            Ok(bits
                .iter()
                .map(|&b| (1.0 - 2.0 * f64::from(b)) * mag)
                .collect())
        }
        (Observation::Bec(symbols), ChannelModel::Bec { .. }) => Ok(symbols
            .iter()
            .map(|s| match s {
                None => 0.0,
                Some(0) => BEC_LLR,
                Some(_) => -BEC_LLR,
            })
            .collect()),
        _ => Err(Error::Model(format!(
            "observation does not belong to {channel}"
        ))),
    }
}

/// Visits every output in the support of a finite channel conditioned on
/// the transmitted codeword, passing channel LLRs and the output
/// probability. The callback sees `2^N` outputs: flip patterns for the
/// BSC, erasure patterns for the BEC.
pub fn for_each_support_llr<F>(channel: &ChannelModel, x: &BitVector, mut visit: F) -> Result<()>
where
    F: FnMut(&[f64], f64),
{
    channel.validate()?;
    let n = x.len();
    if n > 20 {
        return Err(Error::Config(format!(
            "exhaustive enumeration over 2^{n} outputs is not practical"
        )));
    }
    let (event_prob, base_prob) = match *channel {
        ChannelModel::Bsc { p } => (p, 1.0 - p),
        ChannelModel::Bec { erasure_prob } => (erasure_prob, 1.0 - erasure_prob),
        ChannelModel::Awgn { .. } => {
            return Err(Error::Config(
                "exhaustive enumeration requires a finite channel".into(),
            ))
        }
    };
    // Probability lookup by event count.
    let mut pow_event = vec![1.0; n + 1];
    let mut pow_base = vec![1.0; n + 1];
    for i in 1..=n {
        pow_event[i] = pow_event[i - 1] * event_prob;
        pow_base[i] = pow_base[i - 1] * base_prob;
    }
    let mag = match *channel {
        ChannelModel::Bsc { p } => ((1.0 - p) / p).ln(),
        _ => BEC_LLR,
    };
    let mut llrs = vec![0.0; n];
    for mask in 0u64..(1u64 << n) {
        let events = mask.count_ones() as usize;
        let prob = pow_event[events] * pow_base[n - events];
        for (i, llr) in llrs.iter_mut().enumerate() {
            let hit = (mask >> i) & 1 == 1;
            *llr = match *channel {
                ChannelModel::Bsc { .. } => {
                    let received = x.get(i) ^ u8::from(hit);
                    (1.0 - 2.0 * f64::from(received)) * mag
                }
                ChannelModel::Bec { .. } => {
                    if hit {
                        0.0
                    } else if x.get(i) == 0 {
                        BEC_LLR
                    } else {
                        -BEC_LLR
                    }
                }
                ChannelModel::Awgn { .. } => unreachable!(),
            };
        }
        visit(&llrs, prob);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{chunk_rng, StreamDomain, StreamKey};

    #[test]
    fn awgn_llr_scaling() {
        // sigma^2 = 1 corresponds to Es/N0 = 1/2, i.e. about -3.01 dB.
        let channel = ChannelModel::Awgn {
            esn0_db: 10.0 * (0.5f64).log10(),
        };
        let sigma2 = channel.awgn_sigma2().unwrap();
        assert!((sigma2 - 1.0).abs() < 1e-12);
        let y = Observation::Awgn(vec![1.0]);
        let llr = channel_llr(&y, &channel).unwrap();
        assert!((llr[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bsc_llr_magnitude() {
        let channel = ChannelModel::Bsc { p: 0.1 };
        let y = Observation::Bsc(BitVector::from_bits(vec![0, 1]).unwrap());
        let llr = channel_llr(&y, &channel).unwrap();
        assert!((llr[0] - 9f64.ln()).abs() < 1e-12);
        assert!((llr[1] + 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bec_llr_values() {
        let channel = ChannelModel::Bec { erasure_prob: 0.3 };
        let y = Observation::Bec(vec![Some(0), Some(1), None]);
        let llr = channel_llr(&y, &channel).unwrap();
        assert_eq!(llr, vec![BEC_LLR, -BEC_LLR, 0.0]);
    }

    #[test]
    fn mismatched_observation_is_rejected() {
        let channel = ChannelModel::Bsc { p: 0.1 };
        let y = Observation::Awgn(vec![0.0]);
        assert!(channel_llr(&y, &channel).is_err());
    }

    #[test]
    fn transmission_is_reproducible() {
        let x = BitVector::zeros(64);
        let channel = ChannelModel::Awgn { esn0_db: 1.0 };
        let key = StreamKey::new(StreamDomain::Test, 0, 0);
        let a = transmit(&x, &channel, &mut chunk_rng(7, key, 0));
        let b = transmit(&x, &channel, &mut chunk_rng(7, key, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn support_probabilities_sum_to_one() {
        let x = BitVector::zeros(10);
        for channel in [
            ChannelModel::Bsc { p: 0.05 },
            ChannelModel::Bec { erasure_prob: 0.3 },
        ] {
            let mut total = 0.0;
            let mut count = 0u64;
            for_each_support_llr(&channel, &x, |_, prob| {
                total += prob;
                count += 1;
            })
            .unwrap();
            assert_eq!(count, 1 << 10);
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_json_shape() {
        let channel = ChannelModel::Awgn { esn0_db: 1.5 };
        let json = serde_json::to_value(channel).unwrap();
        assert_eq!(json["type"], "awgn");
        assert_eq!(json["esn0_db"], 1.5);
        let back: ChannelModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, channel);
    }
}
