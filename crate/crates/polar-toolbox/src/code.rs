//! Code descriptions and the polar transform.
//!
//! A [`CodeSpec`] fixes the block length `N = 2^n`, the payload size `K`,
//! the information set (1-based bit indices), and an optional CRC that
//! occupies the last `crc.width` information positions. Specs serialize to
//! a small JSON document so constructions, simulations, and external tools
//! can exchange them as files.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::{Error, Result};

/// A sequence of bits stored one per byte, each 0 or 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    bits: Vec<u8>,
}

impl BitVector {
    /// Builds a bit vector, rejecting any value other than 0 or 1.
    pub fn from_bits(bits: impl Into<Vec<u8>>) -> Result<Self> {
        let bits = bits.into();
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Config("bit vectors may only hold 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    /// All-zero vector of the given length.
    pub fn zeros(len: usize) -> Self {
        Self {
            bits: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> u8 {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: u8) {
        debug_assert!(value <= 1);
        self.bits[i] = value;
    }

    pub fn iter(&self) -> std::slice::Iter<'_, u8> {
        self.bits.iter()
    }

    /// True if every bit is zero.
    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [u8] {
        &mut self.bits
    }

    /// Elementwise XOR; lengths must match.
    pub fn xor(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Dimension {
                what: "xor operand",
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(Self {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a ^ b)
                .collect(),
        })
    }
}

impl std::ops::Index<usize> for BitVector {
    type Output = u8;
    fn index(&self, i: usize) -> &u8 {
        &self.bits[i]
    }
}

impl std::fmt::Debug for BitVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// CRC parameters: generator polynomial coefficients most-significant bit
/// first, so a generator of degree `width` occupies `width + 1` bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrcSpec {
    pub width: usize,
    pub generator: u64,
    pub init: u64,
    pub final_xor: u64,
}

impl CrcSpec {
    pub fn new(width: usize, generator: u64, init: u64, final_xor: u64) -> Result<Self> {
        if width == 0 || width > 32 {
            return Err(Error::Config(format!("unsupported CRC width {width}")));
        }
        if generator >> width != 1 {
            return Err(Error::Config(format!(
                "CRC generator {generator:#x} does not have degree {width}"
            )));
        }
        let mask = (1u64 << width) - 1;
        if init > mask || final_xor > mask {
            return Err(Error::Config(
                "CRC init/final_xor wider than the CRC itself".into(),
            ));
        }
        Ok(Self {
            width,
            generator,
            init,
            final_xor,
        })
    }

    /// CRC-16 with generator x^16 + x^12 + x^5 + 1, zero init, zero final xor.
    pub fn crc16() -> Self {
        Self::new(16, 0x1_1021, 0, 0).unwrap()
    }

    /// The 24-bit CRC known as CRC24C in cellular standards.
    pub fn crc24c() -> Self {
        Self::new(24, 0x1B2_B117, 0, 0).unwrap()
    }
}

/// Computes the CRC remainder of `payload`, most-significant bit first.
pub fn crc_compute(payload: &[u8], crc: &CrcSpec) -> BitVector {
    let mask = (1u64 << crc.width) - 1;
    let poly_low = crc.generator & mask;
    let mut reg = crc.init;
    for &b in payload {
        debug_assert!(b <= 1);
        let top = ((reg >> (crc.width - 1)) & 1) as u8 ^ b;
        reg = (reg << 1) & mask;
        if top == 1 {
            reg ^= poly_low;
        }
    }
    reg ^= crc.final_xor;
    let mut out = BitVector::zeros(crc.width);
    for i in 0..crc.width {
        out.set(i, ((reg >> (crc.width - 1 - i)) & 1) as u8);
    }
    out
}

/// Checks a message whose last `crc.width` bits are the attached remainder.
pub fn crc_check(message_with_crc: &[u8], crc: &CrcSpec) -> Result<bool> {
    if message_with_crc.len() < crc.width {
        return Err(Error::Dimension {
            what: "CRC-protected message",
            expected: crc.width,
            actual: message_with_crc.len(),
        });
    }
    let split = message_with_crc.len() - crc.width;
    let expect = crc_compute(&message_with_crc[..split], crc);
    Ok(expect.as_slice() == &message_with_crc[split..])
}

#[derive(Serialize, Deserialize, Clone)]
struct RawCrc {
    width: usize,
    generator_hex: String,
    init_hex: String,
    final_xor_hex: String,
}

fn parse_hex(s: &str, what: &str) -> Result<u64> {
    let trimmed = s.trim_start_matches("0x").trim_start_matches("0X");
    u64::from_str_radix(trimmed, 16)
        .map_err(|_| Error::Parse(format!("bad hex value {s:?} for {what}")))
}

impl TryFrom<RawCrc> for CrcSpec {
    type Error = Error;
    fn try_from(raw: RawCrc) -> Result<Self> {
        CrcSpec::new(
            raw.width,
            parse_hex(&raw.generator_hex, "generator")?,
            parse_hex(&raw.init_hex, "init")?,
            parse_hex(&raw.final_xor_hex, "final_xor")?,
        )
    }
}

impl From<CrcSpec> for RawCrc {
    fn from(c: CrcSpec) -> Self {
        RawCrc {
            width: c.width,
            generator_hex: format!("{:#x}", c.generator),
            init_hex: format!("{:#x}", c.init),
            final_xor_hex: format!("{:#x}", c.final_xor),
        }
    }
}

/// A polar code description.
///
/// `K` counts payload bits only; when a CRC is attached, the information
/// set holds `K + crc.width` positions and the CRC remainder occupies the
/// last `crc.width` of them in increasing index order.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "RawCodeSpec", into = "RawCodeSpec")]
pub struct CodeSpec {
    n: u32,
    block_len: usize,
    payload_len: usize,
    info_set: Vec<usize>,
    crc: Option<CrcSpec>,
    design_point: Option<ChannelModel>,
    construction_method: Option<String>,
    construction_params: Option<serde_json::Value>,
    // Derived, rebuilt on construction.
    is_info: Vec<bool>,
}

#[derive(Serialize, Deserialize, Clone)]
struct RawCodeSpec {
    n: u32,
    #[serde(rename = "N")]
    big_n: usize,
    #[serde(rename = "K")]
    k: usize,
    info_set: Vec<usize>,
    crc: Option<RawCrc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    design_point: Option<ChannelModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    construction_method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    construction_params: Option<serde_json::Value>,
}

impl TryFrom<RawCodeSpec> for CodeSpec {
    type Error = Error;
    fn try_from(raw: RawCodeSpec) -> Result<Self> {
        let crc = raw.crc.map(CrcSpec::try_from).transpose()?;
        let mut spec = CodeSpec::with_options(
            raw.big_n,
            raw.k,
            raw.info_set,
            crc,
            raw.design_point,
            raw.construction_method,
            raw.construction_params,
        )?;
        if raw.n != spec.n {
            return Err(Error::Config(format!(
                "n = {} does not match N = {}",
                raw.n, spec.block_len
            )));
        }
        spec.n = raw.n;
        Ok(spec)
    }
}

impl From<CodeSpec> for RawCodeSpec {
    fn from(s: CodeSpec) -> Self {
        RawCodeSpec {
            n: s.n,
            big_n: s.block_len,
            k: s.payload_len,
            info_set: s.info_set,
            crc: s.crc.map(RawCrc::from),
            design_point: s.design_point,
            construction_method: s.construction_method,
            construction_params: s.construction_params,
        }
    }
}

impl CodeSpec {
    /// Builds a plain spec without CRC from a block length, payload size,
    /// and 1-based information set.
    pub fn new(block_len: usize, payload_len: usize, info_set: Vec<usize>) -> Result<Self> {
        Self::with_options(block_len, payload_len, info_set, None, None, None, None)
    }

    /// Builds a spec with all optional fields.
    pub fn with_options(
        block_len: usize,
        payload_len: usize,
        mut info_set: Vec<usize>,
        crc: Option<CrcSpec>,
        design_point: Option<ChannelModel>,
        construction_method: Option<String>,
        construction_params: Option<serde_json::Value>,
    ) -> Result<Self> {
        if block_len < 2 || !block_len.is_power_of_two() {
            return Err(Error::Config(format!(
                "block length {block_len} is not a power of two >= 2"
            )));
        }
        info_set.sort_unstable();
        let k_total = info_set.len();
        if k_total == 0 || k_total > block_len {
            return Err(Error::Config(format!(
                "information set has {k_total} entries for N = {block_len}"
            )));
        }
        let mut is_info = vec![false; block_len];
        for &i in &info_set {
            if i == 0 || i > block_len {
                return Err(Error::Config(format!(
                    "information index {i} outside 1..={block_len}"
                )));
            }
            if is_info[i - 1] {
                return Err(Error::Config(format!("duplicate information index {i}")));
            }
            is_info[i - 1] = true;
        }
        let crc_width = crc.as_ref().map_or(0, |c| c.width);
        if crc_width >= k_total {
            return Err(Error::Config(format!(
                "CRC width {crc_width} leaves no payload in a {k_total}-bit information set"
            )));
        }
        if payload_len + crc_width != k_total {
            return Err(Error::Config(format!(
                "payload {payload_len} + CRC {crc_width} does not match {k_total} information bits"
            )));
        }
        Ok(Self {
            n: block_len.trailing_zeros(),
            block_len,
            payload_len,
            info_set,
            crc,
            design_point,
            construction_method,
            construction_params,
            is_info,
        })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn stages(&self) -> u32 {
        self.n
    }

    /// Payload bits, excluding any CRC.
    pub fn payload_len(&self) -> usize {
        self.payload_len
    }

    /// Information positions including CRC positions.
    pub fn k_total(&self) -> usize {
        self.info_set.len()
    }

    /// 1-based information set in ascending order.
    pub fn info_set(&self) -> &[usize] {
        &self.info_set
    }

    pub fn crc(&self) -> Option<&CrcSpec> {
        self.crc.as_ref()
    }

    pub fn design_point(&self) -> Option<&ChannelModel> {
        self.design_point.as_ref()
    }

    pub fn construction_method(&self) -> Option<&str> {
        self.construction_method.as_deref()
    }

    pub fn construction_params(&self) -> Option<&serde_json::Value> {
        self.construction_params.as_ref()
    }

    pub fn set_design_point(&mut self, point: Option<ChannelModel>) {
        self.design_point = point;
    }

    pub fn set_construction(&mut self, method: &str, params: Option<serde_json::Value>) {
        self.construction_method = Some(method.to_string());
        self.construction_params = params;
    }

    /// True when 1-based position `i` carries information.
    pub fn is_info(&self, i: usize) -> bool {
        self.is_info[i - 1]
    }

    /// Per-position information flags, 0-based.
    pub fn info_mask(&self) -> &[bool] {
        &self.is_info
    }

    /// 1-based frozen positions in ascending order.
    pub fn frozen_set(&self) -> Vec<usize> {
        (1..=self.block_len)
            .filter(|&i| !self.is_info[i - 1])
            .collect()
    }

    /// Short identifier used in reports: method, size, and a hash of the
    /// canonical JSON form.
    pub fn id(&self) -> String {
        let method = self.construction_method.as_deref().unwrap_or("custom");
        format!(
            "{method}_n{}_k{}_{:08x}",
            self.block_len,
            self.payload_len,
            self.content_hash() as u32
        )
    }

    /// FNV-1a hash of the canonical JSON serialization.
    pub fn content_hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h
    }

    /// Extracts the information-position bits of a length-N vector in
    /// ascending index order.
    pub fn extract_info_bits(&self, u: &BitVector) -> Result<Vec<u8>> {
        if u.len() != self.block_len {
            return Err(Error::Dimension {
                what: "u-vector",
                expected: self.block_len,
                actual: u.len(),
            });
        }
        Ok(self.info_set.iter().map(|&i| u.get(i - 1)).collect())
    }
}

impl std::fmt::Debug for CodeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CodeSpec")
            .field("N", &self.block_len)
            .field("K", &self.payload_len)
            .field("k_total", &self.k_total())
            .field("crc", &self.crc.as_ref().map(|c| c.width))
            .field("method", &self.construction_method)
            .finish()
    }
}

/// In-place polar transform: `len` must be a power of two. The transform
/// is an involution over GF(2), so it both encodes and inverts.
pub fn polar_transform(bits: &mut [u8]) {
    debug_assert!(bits.len().is_power_of_two());
    let mut step = 1;
    while step < bits.len() {
        let mut base = 0;
        while base < bits.len() {
            for i in base..base + step {
                bits[i] ^= bits[i + step];
            }
            base += 2 * step;
        }
        step *= 2;
    }
}

/// Encodes a length-N u-vector into a codeword.
pub fn polar_encode(u: &BitVector, spec: &CodeSpec) -> Result<BitVector> {
    if u.len() != spec.block_len() {
        return Err(Error::Dimension {
            what: "u-vector",
            expected: spec.block_len(),
            actual: u.len(),
        });
    }
    let mut out = u.clone();
    polar_transform(out.bits_mut());
    Ok(out)
}

/// Places payload bits (followed by the CRC remainder when configured)
/// into the information positions and zeros everywhere else.
pub fn message_to_uvector(payload: &BitVector, spec: &CodeSpec) -> Result<BitVector> {
    if payload.len() != spec.payload_len() {
        return Err(Error::Dimension {
            what: "payload",
            expected: spec.payload_len(),
            actual: payload.len(),
        });
    }
    let mut message: Vec<u8> = payload.as_slice().to_vec();
    if let Some(crc) = spec.crc() {
        message.extend_from_slice(crc_compute(payload.as_slice(), crc).as_slice());
    }
    debug_assert_eq!(message.len(), spec.k_total());
    let mut u = BitVector::zeros(spec.block_len());
    for (&pos, &bit) in spec.info_set().iter().zip(&message) {
        u.set(pos - 1, bit);
    }
    Ok(u)
}
