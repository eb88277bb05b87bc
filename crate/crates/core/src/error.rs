use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: length {length} and width {width} must both be positive")]
    InvalidBox { length: f64, width: f64 },

    #[error("vocabulary too large: requested {requested} tokens but only {distinct} distinct segments")]
    VocabularyTooLarge { requested: usize, distinct: usize },

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("invalid token id {id} for vocabulary of size {size}")]
    InvalidToken { id: usize, size: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("replay mismatch at rollout {rollout}, step {step}, agent {agent}: stored {stored}, recomputed {recomputed}")]
    ReplayMismatch {
        rollout: usize,
        step: usize,
        agent: usize,
        stored: f64,
        recomputed: f64,
    },

    #[error("no valid ground truth in {0}")]
    NoValidGroundTruth(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        Error::Parse {
            context: context.to_string(),
            message: err.to_string(),
        }
    }
}
