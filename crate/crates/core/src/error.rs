use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty distribution: all event counts are zero")]
    EmptyDistribution,

    #[error("degenerate samples: {0}")]
    Degenerate(String),

    #[error("transition sampling failed after {0} attempts")]
    TransitionSampling(usize),

    #[error("training data contains a single class ({0})")]
    SingleClass(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{path}: row {row}, column `{column}`: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: column mismatch: expected [{expected}], found [{found}]")]
    Columns {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("stage `{stage}` is not permitted to read {kind} files")]
    AccessDenied { stage: String, kind: String },

    #[error("text probe generation failed: {0}")]
    TextProbe(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
