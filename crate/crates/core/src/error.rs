use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("generation error: {0}")]
    Generation(String),

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },

    #[error("empty annotation: text encoder needs at least one token")]
    EmptyAnnotation,

    #[error("shape mismatch in {context}: {detail}")]
    ShapeMismatch { context: String, detail: String },

    #[error("non-finite value at {0}")]
    Numeric(String),

    #[error("degenerate embedding: norm {norm:e} below floor")]
    DegenerateEmbedding { norm: f64 },

    #[error("no annotated videos in dataset")]
    NoAnnotatedVideos,

    #[error("batch slot {0} carries no text")]
    MissingText(usize),

    #[error("dataset has no recorded actions")]
    MissingActions,

    #[error("vocabulary mismatch: checkpoint {expected}, dataset {found}")]
    VocabularyMismatch { expected: String, found: String },

    #[error("unknown task {0}")]
    UnknownTask(usize),

    #[error("unknown episode {0}")]
    UnknownEpisode(usize),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("curve too short: need at least 2 points, got {0}")]
    CurveTooShort(usize),

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("verification failed")]
    VerificationFailed,

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

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
