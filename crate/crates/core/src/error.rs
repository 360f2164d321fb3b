use thiserror::Error;

/// Errors produced by behavior construction, evaluation, and search.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("behavior not normalized: input block {input} sums to {sum}")]
    NotNormalized { input: usize, sum: f64 },

    #[error("negative probability {value} at table index {index}")]
    NegativeProbability { index: usize, value: f64 },

    #[error("strategy space of {count} strategies exceeds budget {budget}")]
    BudgetExceeded { count: u128, budget: u128 },

    #[error("unsupported file format tag: {0}")]
    UnsupportedFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
