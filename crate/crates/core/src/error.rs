use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max asymmetry {max_asym:.3e})")]
    NotSymmetric { max_asym: f64 },

    #[error("matrix is singular or near-singular (smallest eigenvalue {lambda_min:.3e})")]
    Singular { lambda_min: f64 },

    #[error(
        "predictor covariance is singular (smallest eigenvalue {lambda_min:.3e}); \
         repair it with psd_repair or remove collinear variables"
    )]
    SingularPredictors { lambda_min: f64 },

    #[error("column '{column}' has zero robust scale")]
    ZeroScale { column: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        /// Last iterate (spatial median) or per-iteration log-likelihoods (EM).
        trace: Vec<f64>,
    },

    #[error("parse error in {path} at row {row}, column {col}: {msg}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
