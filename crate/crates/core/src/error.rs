use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("unsupported camera model `{0}` (only PINHOLE and SIMPLE_PINHOLE are accepted)")]
    UnsupportedCameraModel(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient for gaussian {index}")]
    NonFiniteGradient { index: usize },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("ply: {0}")]
    Ply(String),

    #[error("ply: missing property `{0}`")]
    MissingProperty(String),

    #[error("compressed asset: {0}")]
    Container(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
