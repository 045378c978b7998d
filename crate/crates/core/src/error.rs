use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixing matrix: {0}")]
    InvalidMixingMatrix(String),

    #[error("invalid degree vector: {0}")]
    InvalidDegrees(String),

    #[error("invalid membership matrix: {0}")]
    InvalidMembership(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("edge probability {value} > 1 for pair ({i}, {j})")]
    ProbabilityOverflow { i: usize, j: usize, value: f64 },

    #[error("node index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("n = {n} exceeds the dense limit of {cap} nodes; use the row-wise accessor instead")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("eigensolver did not converge after {iterations} iterations (residuals {residuals:?})")]
    NoConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("KL divergence is infinite at pair ({i}, {j}): p = {p}, q = {q}")]
    InfiniteKl { i: usize, j: usize, p: f64, q: f64 },

    #[error("packing construction failed: {0}")]
    Packing(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
