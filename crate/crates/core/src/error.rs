use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("rank deficient: rank {rank}, need {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("ambiguity out of class: diagonal entry {row} would be {value}")]
    AmbiguityOutOfClass { row: usize, value: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("solver diverged at iteration {iteration} (objective {objective:e}); use a smaller step")]
    Divergence { iteration: usize, objective: f64 },

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
