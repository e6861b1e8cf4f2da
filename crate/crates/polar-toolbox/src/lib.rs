//! Polar code construction and evaluation toolbox.
//!
//! The crate covers the full experimental loop for polar codes under
//! successive-cancellation style decoding:
//!
//! * [`code`]: code descriptions, the polar transform, and CRC attachment.
//! * [`channel`]: BPSK/AWGN, BSC, and BEC models producing channel LLRs.
//! * [`decoder`]: SC, SC list, and SC flip (DSCF) decoders with the traces
//!   needed by the estimators.
//! * [`estimator`]: per-bit error profiles and semi-analytical BLER
//!   estimates computed from decoder traces, with an exhaustive mode for
//!   small codes on finite channels.
//! * [`construct`]: frozen-set construction methods, from Bhattacharyya and
//!   Gaussian-approximation baselines to the decoder-driven incremental
//!   searches.
//! * [`experiment`]: reproducible simulation sweeps, paired comparisons, and
//!   report emission used by the command-line binary.
//!
//! Bit positions in public interfaces are 1-based, matching the common
//! convention for polar code index sets; in-memory arrays are addressed
//! 0-based. All decoders work on log-likelihood ratios where a positive
//! value favors bit 0.

pub mod channel;
pub mod code;
pub mod construct;
pub mod decoder;
pub mod estimator;
pub mod experiment;
pub mod rng;

mod sequences;

pub use code::{BitVector, CodeSpec, CrcSpec};
pub use sequences::{nr_info_set, nr_sequence, NR_SEQUENCE_MAX_N};

/// Errors reported by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("channel/observation mismatch: {0}")]
    Model(String),
    #[error("construction aborted at iteration {iteration}: estimator did not converge ({errors} errors in {samples} samples)")]
    NotConverged {
        iteration: usize,
        samples: u64,
        errors: u64,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
