//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by panel construction, estimation, and pricing routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed input file row, with its 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An invalid parameter value supplied by the caller.
    #[error("invalid parameter `{name}`: {msg}")]
    Parameter { name: &'static str, msg: String },

    /// A numerical failure (singular matrix, failed factorization, ...).
    #[error("numerical error in {context}: {msg}")]
    Numerical { context: &'static str, msg: String },

    /// Input panels do not line up (dates, assets, dimensions).
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A pipeline stage could not find or produce a required artifact.
    #[error("pipeline error in stage `{stage}`: {msg}")]
    Pipeline { stage: String, msg: String },

    /// Configuration failed validation before any compute started.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parameter(name: &'static str, msg: impl Into<String>) -> Self {
        Error::Parameter { name, msg: msg.into() }
    }

    pub(crate) fn numerical(context: &'static str, msg: impl Into<String>) -> Self {
        Error::Numerical { context, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
