//! Deterministic random-number substreams.
//!
//! Every randomized routine in this crate draws from a ChaCha12 stream
//! addressed by `(root seed, stream key, chunk index)`. The root seed is
//! expanded to ChaCha key material with SplitMix64; the 64-bit ChaCha
//! stream id packs a domain tag plus two caller-chosen lanes and the chunk
//! index. Two distinct addresses therefore never share a stream, and a
//! sample's randomness depends only on its address, never on how work was
//! split across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Domains keep subsystems out of each other's streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamDomain {
    Estimate = 1,
    Sweep = 2,
    Convergence = 3,
    Construction = 4,
    Payload = 5,
    Test = 6,
}

/// Address of one substream family; `chunk` indexes packets of samples.
#[derive(Clone, Copy, Debug)]
pub struct StreamKey {
    pub domain: StreamDomain,
    /// Outer lane, e.g. a spec index or construction iteration.
    pub lane: u16,
    /// Inner lane, e.g. a channel point or run index.
    pub slot: u16,
}

impl StreamKey {
    pub fn new(domain: StreamDomain, lane: usize, slot: usize) -> Self {
        assert!(lane <= u16::MAX as usize, "stream lane out of range");
        assert!(slot <= u16::MAX as usize, "stream slot out of range");
        Self {
            domain,
            lane: lane as u16,
            slot: slot as u16,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha12 generator for one chunk of one substream.
pub fn chunk_rng(root_seed: u64, key: StreamKey, chunk: u32) -> ChaCha12Rng {
    assert!(chunk < (1 << 24), "chunk index out of range");
    let mut state = root_seed;
    let mut seed = [0u8; 32];
    for word in 0..4 {
        let v = splitmix64(&mut state);
        seed[word * 8..word * 8 + 8].copy_from_slice(&v.to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(seed);
    let stream = ((key.domain as u64) << 56)
        | (u64::from(key.lane) << 40)
        | (u64::from(key.slot) << 24)
        | u64::from(chunk);
    rng.set_stream(stream);
    rng
}

/// Human-readable description recorded in reports.
pub const ALGORITHM: &str = "ChaCha12, SplitMix64-expanded seed, stream id = domain|lane|slot|chunk";

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let key = StreamKey::new(StreamDomain::Test, 3, 7);
        let mut a = chunk_rng(42, key, 0);
        let mut b = chunk_rng(42, key, 0);
        assert_eq!(a.next_u64(), b.next_u64());

        let mut c = chunk_rng(42, key, 1);
        let mut d = chunk_rng(42, StreamKey::new(StreamDomain::Test, 3, 8), 0);
        let mut e = chunk_rng(43, key, 0);
        let base = chunk_rng(42, key, 0).next_u64();
        assert_ne!(base, c.next_u64());
        assert_ne!(base, d.next_u64());
        assert_ne!(base, e.next_u64());
    }
}
