//! Plain successive-cancellation decoding.
//!
//! The recursion works on LLR slices with a per-depth scratch pool, so a
//! decoder instance can run many blocks without reallocating. Besides the
//! usual decision-feedback mode there is a genie mode that feeds back
//! known-true bits (the workhorse behind error-profile measurement) and a
//! single-flip mode used by the flip decoder.

use crate::code::{BitVector, CodeSpec};
use crate::decoder::{g_node, CheckNode, LLR_SAT};
use crate::{Error, Result};

/// Decision policy for the information positions.
#[derive(Clone, Copy, Debug)]
pub enum ScMode<'a> {
    /// Feed decisions back into the partial sums.
    Practical,
    /// Feed back the true bits; decisions are only recorded through the
    /// LLR trace. `true_u` is the full u-domain vector.
    Genie { true_u: &'a BitVector },
    /// Like `Practical`, but the decision at one position (1-based,
    /// u-domain) is inverted.
    FlipOne { position: usize },
}

/// Result of one SC pass.
#[derive(Clone, Debug)]
pub struct ScOutput {
    /// The u-domain bits that were fed back into the partial sums. In
    /// practical mode these are the decisions; in genie mode they echo
    /// the true bits.
    pub u_hat: BitVector,
    /// Decision LLR seen at each u position, frozen ones included.
    pub decision_llrs: Vec<f64>,
}

impl ScOutput {
    /// Information bits (payload plus any CRC) out of `u_hat`.
    pub fn info_bits(&self, spec: &CodeSpec) -> Result<Vec<u8>> {
        spec.extract_info_bits(&self.u_hat)
    }
}

/// Reusable SC decoder for one block length.
pub struct ScDecoder {
    block_len: usize,
    check: CheckNode,
    pool: Vec<Vec<f64>>,
    x_buf: Vec<u8>,
}

impl ScDecoder {
    pub fn new(block_len: usize) -> Result<Self> {
        Self::with_check_node(block_len, CheckNode::Exact)
    }

    pub fn with_check_node(block_len: usize, check: CheckNode) -> Result<Self> {
        if !block_len.is_power_of_two() || block_len < 2 {
            return Err(Error::Config(format!(
                "block length {block_len} is not a power of two at least 2"
            )));
        }
        let stages = block_len.trailing_zeros() as usize;
        let pool = (0..stages).map(|d| vec![0.0; block_len >> (d + 1)]).collect();
        Ok(ScDecoder {
            block_len,
            check,
            pool,
            x_buf: vec![0; block_len],
        })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn decode(&mut self, spec: &CodeSpec, llrs: &[f64], mode: ScMode) -> Result<ScOutput> {
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
        if let ScMode::Genie { true_u } = mode {
            if true_u.len() != self.block_len {
                return Err(Error::Dimension {
                    what: "genie u-vector",
                    expected: self.block_len,
                    actual: true_u.len(),
                });
            }
        }

        let mut u_hat = BitVector::zeros(self.block_len);
        let mut decision_llrs = vec![0.0; self.block_len];
        let info = spec.info_mask();
        let mut phase = 0usize;
        {
            let u_bits = u_hat.bits_mut();
            let mut leaf = |llr: f64, x_bit: &mut u8| {
                let idx = phase;
                decision_llrs[idx] = llr;
                let hard = u8::from(llr < 0.0);
                let bit = if !info[idx] {
                    0
                } else {
                    match mode {
                        ScMode::Practical => hard,
                        ScMode::Genie { true_u } => true_u.get(idx),
                        ScMode::FlipOne { position } => {
                            if idx + 1 == position {
                                1 - hard
                            } else {
                                hard
                            }
                        }
                    }
                };
                u_bits[idx] = bit;
                *x_bit = bit;
                phase += 1;
            };
            recurse(llrs, &mut self.pool, &mut self.x_buf, self.check, &mut leaf);
        }
        debug_assert_eq!(phase, self.block_len);
        Ok(ScOutput {
            u_hat,
            decision_llrs,
        })
    }
}

fn recurse<F>(llrs: &[f64], pool: &mut [Vec<f64>], x_out: &mut [u8], check: CheckNode, leaf: &mut F)
where
    F: FnMut(f64, &mut u8),
{
    let m = llrs.len();
    if m == 1 {
        leaf(llrs[0], &mut x_out[0]);
        return;
    }
    let half = m / 2;
    let (tmp, rest) = pool.split_first_mut().unwrap();
    let tmp = &mut tmp[..half];
    for j in 0..half {
        tmp[j] = check.eval(llrs[j], llrs[j + half]).clamp(-LLR_SAT, LLR_SAT);
    }
    let (xl, xr) = x_out.split_at_mut(half);
    recurse(tmp, rest, xl, check, leaf);
    for j in 0..half {
        tmp[j] = g_node(llrs[j], llrs[j + half], xl[j]).clamp(-LLR_SAT, LLR_SAT);
    }
    recurse(tmp, rest, xr, check, leaf);
    for j in 0..half {
        xl[j] ^= xr[j];
    }
}

/// One-shot SC decode.
pub fn sc_decode(spec: &CodeSpec, llrs: &[f64], mode: ScMode) -> Result<ScOutput> {
    ScDecoder::new(spec.block_len())?.decode(spec, llrs, mode)
}
