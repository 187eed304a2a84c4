use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("iteration cap of {cap} exceeded ({context})")]
    IterationCap { cap: usize, context: String },

    #[error("the MDP has no spatial layout")]
    NoSpatialLayout,

    #[error("schedule has no analytic rate limit")]
    NoAnalyticLimit,

    #[error("regime is not covered by any convergence case")]
    UnclassifiedRegime,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
