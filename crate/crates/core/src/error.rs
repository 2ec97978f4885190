use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error(transparent)]
    Container(#[from] ContainerError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short code used in the one-line CLI error format.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Contract(_) => "contract",
            Error::NonFinite { .. } => "non_finite",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Training(_) => "training",
            Error::Container(e) => e.code(),
            Error::Io { .. } => "io",
        }
    }
}

/// Failures while decoding a model container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContainerError {
    #[error("bad magic bytes (not a model container)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch (container is corrupted)")]
    ChecksumMismatch,
    #[error("container truncated")]
    Truncated,
    #[error("malformed container: {0}")]
    Malformed(String),
}

impl ContainerError {
    pub fn code(&self) -> &'static str {
        match self {
            ContainerError::BadMagic => "container_magic",
            ContainerError::UnsupportedVersion(_) => "container_version",
            ContainerError::ChecksumMismatch => "container_checksum",
            ContainerError::Truncated => "container_truncated",
            ContainerError::Malformed(_) => "container_malformed",
        }
    }
}
