//! Built-in reliability sequences.

use crate::{Error, Result};

/// Largest block length covered by the built-in sequence.
pub const NR_SEQUENCE_MAX_N: usize = 1024;

/// The universal 5G NR polar reliability sequence (3GPP TS 38.212,
/// Table 5.3.1.2-1) converted to 1-based indices, least reliable first.
/// See `assets/README.md` for provenance.
const NR_SEQUENCE_TEXT: &str = include_str!("../assets/nr_polar_sequence_n1024.txt");

/// Returns the sequence restricted to block length `block_len`
/// (1-based indices, least reliable first).
pub fn nr_sequence(block_len: usize) -> Result<Vec<usize>> {
    if block_len < 2 || !block_len.is_power_of_two() || block_len > NR_SEQUENCE_MAX_N {
        return Err(Error::Config(format!(
            "built-in sequence covers powers of two up to {NR_SEQUENCE_MAX_N}, not {block_len}"
        )));
    }
    let seq: Vec<usize> = NR_SEQUENCE_TEXT
        .lines()
        .map(|l| l.trim().parse::<usize>().expect("asset holds integers"))
        .filter(|&v| v <= block_len)
        .collect();
    debug_assert_eq!(seq.len(), block_len);
    Ok(seq)
}

/// Information set of size `k_total` for block length `block_len`:
/// the most reliable entries of the sequence, sorted ascending.
pub fn nr_info_set(block_len: usize, k_total: usize) -> Result<Vec<usize>> {
    if k_total == 0 || k_total > block_len {
        return Err(Error::Config(format!(
            "cannot pick {k_total} information positions out of {block_len}"
        )));
    }
    let seq = nr_sequence(block_len)?;
    let mut info: Vec<usize> = seq[block_len - k_total..].to_vec();
    info.sort_unstable();
    Ok(info)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_is_a_permutation_for_every_length() {
        for n in [2usize, 4, 64, 256, 1024] {
            let seq = nr_sequence(n).unwrap();
            let mut sorted = seq.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (1..=n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn reliability_respects_binary_domination() {
        // If the binary support of one index contains another's, the
        // contained index must be listed as less reliable. Any valid polar
        // reliability order has this property.
        let seq = nr_sequence(1024).unwrap();
        let mut rank = vec![0usize; 1025];
        for (r, &v) in seq.iter().enumerate() {
            rank[v] = r;
        }
        for i in 0..1024usize {
            for j in 0..i {
                if i & j == j {
                    assert!(
                        rank[i + 1] > rank[j + 1],
                        "index {} should outrank {}",
                        i + 1,
                        j + 1
                    );
                }
            }
        }
    }

    #[test]
    fn info_set_takes_the_tail() {
        let info = nr_info_set(8, 4).unwrap();
        // Most reliable four indices of the N = 8 subsequence.
        let seq = nr_sequence(8).unwrap();
        let mut expect: Vec<usize> = seq[4..].to_vec();
        expect.sort_unstable();
        assert_eq!(info, expect);
    }
}
