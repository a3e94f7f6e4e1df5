use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ill-conditioned covariance: rank {rank} of {dim}")]
    IllConditioned { rank: usize, dim: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("relative gain undefined for a zero baseline accuracy")]
    UndefinedGain,

    #[error("checksum mismatch for {path}: expected {expected}, found {found}")]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("refusing to write into non-empty directory {0} (use --force)")]
    DirectoryNotEmpty(PathBuf),

    #[error("malformed dataset: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::InsufficientData(_) => "insufficient_data",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::Shape(_) => "shape",
            Error::Lookup(_) => "lookup",
            Error::UndefinedGain => "undefined_gain",
            Error::Checksum { .. } => "checksum",
            Error::DirectoryNotEmpty(_) => "directory_not_empty",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    /// True for errors caused by the caller's configuration rather than the environment.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::InsufficientData(_)
                | Error::IllConditioned { .. }
                | Error::Shape(_)
                | Error::Lookup(_)
                | Error::UndefinedGain
                | Error::DirectoryNotEmpty(_)
        )
    }
}
