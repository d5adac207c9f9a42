use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed dataset: {0}")]
    MalformedDataset(String),

    #[error("malformed lexicon at line {line}: {reason}")]
    MalformedLexicon { line: usize, reason: String },

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("network error: {0}")]
    Network(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("covariance matrix is degenerate")]
    DegenerateCovariance,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty input")]
    EmptyInput,
}

impl Error {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
