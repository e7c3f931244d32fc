use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("target column `{0}` not found in header")]
    MissingTarget(String),

    #[error("cannot parse cell `{value}` at line {line}, column `{column}`")]
    Parse {
        line: usize,
        column: String,
        value: String,
    },

    #[error("dataset has {rows} usable rows; at least 2 are required")]
    EmptyData { rows: usize },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("index {index} out of range for {len} columns")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("feature {0} is constant")]
    DegenerateColumn(usize),

    #[error("covariance matrix is not positive definite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("knockoff conditional covariance is not positive semidefinite (pivot {pivot:e})")]
    NotPositiveSemidefinite { pivot: f64 },

    #[error("target variance is zero")]
    ZeroTargetVariance,

    #[error("unknown expression `{0}`")]
    UnknownExpression(String),

    #[error("need more than {regressors} rows, got {rows}")]
    InsufficientRows { rows: usize, regressors: usize },

    #[error("invalid k = {k} for {n} rows")]
    InvalidK { k: usize, n: usize },

    #[error("predictor failed at {context}: {message}")]
    PredictorFailure { context: String, message: String },

    #[error("predictor expects {expected} features, dataset has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("rho must satisfy |rho| < 1")]
    InvalidRho(f64),

    #[error("ground truth in closed form requires rho = 0, got {0}")]
    RhoNotZero(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("protocol mismatch: {0}")]
    Protocol(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
