//! Error type shared by every module in the crate.

use alloc::string::String;

/// Validation and precondition failures.
///
/// All fallible operations in this crate return [`Result`]; none panic on
/// bad input. Training configuration problems are reported before the first
/// optimization step runs.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Parallel collections disagree in length.
    #[error("length mismatch: {field} has {got} entries, expected {expected}")]
    LengthMismatch {
        expected: usize,
        field: &'static str,
        got: usize,
    },

    /// An input that must hold at least one element was empty.
    #[error("{what} must not be empty")]
    Empty { what: &'static str },

    /// A probability vector does not sum to one.
    #[error("distribution sums to {sum:e}, expected 1 within tolerance")]
    NotNormalized { sum: f64 },

    /// A probability vector holds a negative entry.
    #[error("negative probability {value:e} at index {index}")]
    NegativeProbability { value: f64, index: usize },

    /// A scalar that must be finite was NaN or infinite.
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    /// Zero reward variance met a zero denominator floor: every advantage
    /// would divide by zero. Either set `lambda > 0` or guarantee variance.
    #[error("degenerate group: zero reward variance with lambda = 0")]
    DegenerateGroup,

    /// A configuration field violates its documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A query UID does not encode a task class index.
    #[error("uid {0:?} does not encode a task class index")]
    MalformedUid(String),
}

pub type Result<T> = core::result::Result<T, Error>;
