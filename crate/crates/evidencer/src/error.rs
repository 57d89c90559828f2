use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty aggregation")]
    EmptyAggregation,

    #[error("matrix is not positive definite (leading minor {minor} failed after jitter)")]
    NotPositiveDefinite { minor: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("proposal/prior support mismatch: all importance weights are zero")]
    SupportMismatch,

    #[error("evaluator returned NaN at iteration {iteration}")]
    NanEncountered { iteration: usize },

    #[error("initial state has zero prior support")]
    ZeroPriorSupport,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: malformed record at line {line}: {msg}")]
    MalformedRecord {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
