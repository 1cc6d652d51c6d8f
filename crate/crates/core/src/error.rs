use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),

    #[error("document {0:?} has an empty body")]
    EmptyBody(String),

    #[error("document {0:?} has an empty author_id")]
    EmptyAuthor(String),

    #[error("repetition index {index} out of range (repetitions = {repetitions})")]
    RepetitionOutOfRange { index: usize, repetitions: usize },

    #[error("unknown stemmer {0:?}")]
    UnknownStemmer(String),

    #[error("vocabulary is empty after pruning (min_doc_fraction = {min_doc_fraction})")]
    EmptyVocabulary { min_doc_fraction: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },

    #[error("SOM grid has {cells} cells, fewer than k = {k}")]
    GridTooSmall { cells: usize, k: usize },

    #[error("validity index needs at least 2 non-empty clusters, got {0}")]
    TooFewClusters(usize),

    #[error("clustering failed for expert {expert}: {source}")]
    Expert {
        expert: String,
        #[source]
        source: Box<Error>,
    },

    #[error("subprofile {0:?} does not belong to the profile set")]
    DanglingSubprofile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
