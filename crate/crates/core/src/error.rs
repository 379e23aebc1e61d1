use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::GroupId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("corpus contains no sentences")]
    EmptyCorpus,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid dependency tree in sentence ending at line {line}: {message}")]
    InvalidTree { line: usize, message: String },

    #[error("unknown term group {0}")]
    UnknownTerm(GroupId),

    #[error("term normalizes to the empty string: {0:?}")]
    EmptyNormalization(String),

    #[error("excluding these members would leave group {0} empty")]
    EmptyGroup(GroupId),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged (non-finite loss in epoch {epoch}); lower the learning rate")]
    Divergence { epoch: usize },

    #[error("term group {0} is not in the model vocabulary")]
    MissingTerm(GroupId),

    #[error("model format error: {0}")]
    Format(String),

    #[error("no seed term is known to any context model")]
    NoSignal,

    #[error("training labels are all identical")]
    DegenerateLabels,

    #[error("expected {expected} features, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("category {0:?} already exists")]
    Conflict(String),

    #[error("{0} not found")]
    NotFound(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
