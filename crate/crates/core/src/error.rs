use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value that does not parse or violates a field bound.
    #[error("invalid value: {0}")]
    Value(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Records that name a market or token the sidecar does not declare.
    #[error("{path}:{line}: unknown reference: {msg}")]
    Reference {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: record out of chronological order ({msg})")]
    Order {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing metadata sidecar for slug `{slug}` (expected {path})")]
    MissingSidecar { slug: String, path: PathBuf },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid result: {0}")]
    InvalidResult(String),

    #[error("network error: {0}")]
    Network(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 1 data, 2 configuration, 3 network.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Value(_)
            | Error::Parse { .. }
            | Error::Reference { .. }
            | Error::Order { .. }
            | Error::Io { .. }
            | Error::InvalidResult(_) => 1,
            Error::Config(_) | Error::MissingSidecar { .. } | Error::Scenario(_) => 2,
            Error::Network(_) => 3,
        }
    }
}
