use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("points {subset:?} are not in general position (|det| = {det:e})")]
    Singular { subset: Vec<usize>, det: f64 },

    #[error("degenerate simplex: {0}")]
    DegenerateSimplex(String),

    #[error("model build error: {0}")]
    Build(String),

    #[error("unsupported by format or backend: {0}")]
    Unsupported(String),

    #[error("solver error: {message}")]
    Solver {
        message: String,
        log: Option<PathBuf>,
    },

    #[error("inconsistent incumbent: {message} (worst violation {violation:e})")]
    Inconsistent { message: String, violation: f64 },

    #[error("well-behave transform failed: {0}")]
    Transform(String),

    #[error("json error: {0}")]
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
