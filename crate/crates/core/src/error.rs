use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("edge probability {value} outside [0, 1] at t={t}, i={i}, j={j}")]
    InvalidProbability {
        t: usize,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("rank {rank} exceeds matrix dimensions {rows}x{cols}")]
    RankTooLarge {
        rank: usize,
        rows: usize,
        cols: usize,
    },

    #[error("symmetric eigensolver did not converge on a {size}x{size} matrix within {max_iter} iterations")]
    NonConvergence { size: usize, max_iter: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("mode-wise metric requires a mode basis")]
    MissingBasis,

    #[error("unknown metric tag `{0}`")]
    UnknownMetric(String),

    #[error("pair set is empty")]
    EmptyPairSet,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::NonFinite(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
