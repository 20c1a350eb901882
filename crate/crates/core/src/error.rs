use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("block size {k} exceeds the exhaustive-search cap of {max}; lower k")]
    BlockTooLarge { k: usize, max: usize },

    #[error("restricted system is not positive definite on support {support:?}; use theta > 0")]
    NotPositiveDefinite { support: Vec<usize> },

    #[error("point is infeasible for the penalty")]
    Infeasible,

    #[error("cardinality budget {budget} is infeasible for a block of size {k}")]
    InfeasibleBudget { budget: i64, k: usize },

    #[error("operation requires a {expected} penalty")]
    WrongPenalty { expected: &'static str },

    #[error("invalid working set: {0}")]
    InvalidBlock(String),

    #[error("enumeration guard exceeded ({work} > {limit}); use a smaller n or k")]
    GuardExceeded { work: u128, limit: u128 },

    #[error("runtime invariant violated: {0}")]
    InvariantViolated(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
