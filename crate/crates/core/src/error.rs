use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PddError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PddError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("iteration diverged: non-finite {0}")]
    Diverged(&'static str),

    #[error("objective `{0}` has no analytic Hessian")]
    MissingHessian(String),

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl PddError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PddError::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PddError::Io {
            path: path.into(),
            source,
        }
    }
}
