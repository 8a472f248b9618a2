use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {what} (expected {expected}, got {actual})")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("basis cardinality overflows the index range for p={p}, n={n}, d={d}")]
    BasisTooLarge { p: usize, n: usize, d: usize },

    #[error("correlation {rho} is outside (-1/(d-1), 1] for d={dim}")]
    InvalidCorrelation { rho: f64, dim: usize },

    #[error("chunks do not partition the {paths} paths on block boundaries: {reason}")]
    InvalidChunks { paths: usize, reason: String },

    #[error("non-finite objective at iteration {iteration} (|lambda| = {lambda_norm})")]
    NonFinite { iteration: usize, lambda_norm: f64 },

    #[error("worker failed on paths {start}..{end}: {reason}")]
    Worker {
        start: usize,
        end: usize,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
