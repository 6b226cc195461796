use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot decode image {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },

    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("cosine distance is undefined for a zero vector")]
    DegenerateVector,

    #[error("invalid age estimate {0}: ages must be finite and non-negative")]
    InvalidAge(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed bundle {path}: field `{field}`: {message}")]
    BundleParse {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("no detection bundle sidecar at {0}")]
    MissingSidecar(PathBuf),

    #[error("backend `{backend}` unavailable: {message}")]
    BackendUnavailable { backend: String, message: String },

    #[error("manifest error at line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("duplicate post id `{post_id}` at manifest line {line}")]
    DuplicatePost { post_id: String, line: usize },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("embeddings from different models cannot be compared: {0:?}")]
    MixedEmbeddingModels(Vec<String>),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed edge list {path}: {message}")]
    EdgeList { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Write {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Read {
            path: path.into(),
            source,
        }
    }
}
