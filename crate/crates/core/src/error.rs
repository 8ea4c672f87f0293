use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error families. The CLI maps each one to a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCategory {
    Parse,
    Data,
    Numeric,
    Contract,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("state error in {op}: {detail}")]
    State { op: &'static str, detail: String },

    #[error("degenerate batch in {op}: {detail}")]
    DegenerateBatch { op: &'static str, detail: String },

    #[error("optimizer error: {0}")]
    Optimizer(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("feature selection error: {0}")]
    Selection(String),

    #[error("prototype error: {0}")]
    Prototype(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dimension(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn state(op: &'static str, detail: impl Into<String>) -> Self {
        Error::State {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse { .. } | Error::Config(_) | Error::Format(_) | Error::Integrity(_) => {
                ErrorCategory::Parse
            }
            Error::Schema(_) | Error::Sampling(_) | Error::Selection(_) => ErrorCategory::Data,
            Error::Dimension { .. }
            | Error::DegenerateBatch { .. }
            | Error::Numeric(_)
            | Error::Prototype(_)
            | Error::Optimizer(_) => ErrorCategory::Numeric,
            Error::State { .. } | Error::Contract(_) | Error::Parameter(_) => {
                ErrorCategory::Contract
            }
            Error::Io { .. } => ErrorCategory::Io,
        }
    }
}
