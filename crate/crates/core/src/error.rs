use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("index {index} out of range for {what}")]
    Index { what: &'static str, index: usize },

    #[error("non-finite value in {what} at index {index}")]
    Numeric { what: String, index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("episode already finished; call reset before stepping")]
    EpisodeDone,

    #[error("malformed file: {0}")]
    Format(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("bad data at record {index}: {detail}")]
    Data { index: usize, detail: String },

    #[error("training aborted at step {step} ({component}): {detail}")]
    Training {
        step: usize,
        component: &'static str,
        detail: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Format(_) | Error::Data { .. } | Error::EpisodeDone => ErrorCategory::Data,
            Error::Numeric { .. } | Error::Training { .. } => ErrorCategory::Numeric,
            Error::Io { .. } => ErrorCategory::Io,
            Error::Dimension { .. }
            | Error::Domain { .. }
            | Error::Index { .. }
            | Error::Contract(_) => ErrorCategory::Contract,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Io,
    Contract,
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
