use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GfpError {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed call (empty input, inconsistent sizes, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("{what} did not converge within {cap} terms")]
    NonConvergence { what: String, cap: u64 },

    /// Conditioning on an event of probability zero.
    #[error("undefined conditional: {0}")]
    UndefinedConditional(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("no quality given for node {node}")]
    MissingQuality { node: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GfpError>;

impl GfpError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        GfpError::Domain(msg.into())
    }
}

/// Coarse classification of [`GfpError`], for callers that map failures to
/// exit statuses or keep them past the error's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Domain,
    Usage,
    NonConvergence,
    UndefinedConditional,
    Parse,
    Io,
}

impl GfpError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            GfpError::Domain(_) => ErrorKind::Domain,
            GfpError::Usage(_) => ErrorKind::Usage,
            GfpError::NonConvergence { .. } => ErrorKind::NonConvergence,
            GfpError::UndefinedConditional(_) => ErrorKind::UndefinedConditional,
            GfpError::Parse { .. } | GfpError::MissingQuality { .. } => ErrorKind::Parse,
            GfpError::Io(_) => ErrorKind::Io,
        }
    }
}
