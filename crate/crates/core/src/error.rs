use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An operation would produce a word longer than the configured cap.
    #[error("length cap exceeded: would need {required}, cap is {cap}")]
    CapExceeded { required: usize, cap: usize },

    /// An operation needs more explicit prefix digits than the point carries.
    #[error("insufficient prefix: need {required} digits, have {available}")]
    InsufficientPrefix { required: usize, available: usize },

    /// A parameter fell outside its documented range.
    #[error("argument out of range: {0}")]
    OutOfRange(String),

    /// Language generation did not stabilize under doubling of the
    /// generating prefix.
    #[error("factor set unstable: doubling the generating prefix changed it (maxLen {max_len})")]
    UnstableLanguage { max_len: usize },

    /// Two words are prefix-comparable, so the parity-lexicographical
    /// comparison of incomparable words does not apply.
    #[error("words are prefix-comparable")]
    PrefixComparable,

    /// The point lies in the exceptional set on which the unbounded fixed
    /// point is undefined (depth saturated the cap).
    #[error("potential undefined at this point (depth cap {cap} saturated)")]
    UndefinedPoint { cap: usize },

    /// The cylinder word for an induced system must not be a factor of the
    /// subshift.
    #[error("cylinder word is a factor of the subshift; induced system requires a non-factor")]
    CylinderIsFactor,

    /// The requested potential variant is not supported by this operation.
    #[error("unsupported potential variant: {0}")]
    UnsupportedPotential(String),

    /// Iterative solver failed to converge within its cap.
    #[error("no convergence after {iterations} iterations (last delta {delta})")]
    NoConvergence { iterations: usize, delta: f64 },

    /// Root bracketing failed.
    #[error("bracketing failed: {0}")]
    NoBracket(String),
}

pub type Result<T> = std::result::Result<T, Error>;
