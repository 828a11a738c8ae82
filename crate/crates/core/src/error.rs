//! Crate-wide error type.

use crate::frontend::ParseDiagnostic;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Lexing or parsing failed; carries the first error diagnostic.
    #[error("parse error at {}:{}: {}", .0.line, .0.col, .0.message)]
    Parse(ParseDiagnostic),

    /// Malformed DOT input.
    #[error("dot error at line {line}: {message}")]
    Dot { line: usize, message: String },

    /// Graph construction violated a precondition.
    #[error("graph error: {0}")]
    Graph(String),

    /// Binary file format violation (CSSM or checkpoint).
    #[error("format error: {0}")]
    Format(String),

    /// Bad manifest row or dataset contract violation.
    #[error("dataset error at row {row}: {message}")]
    Dataset { row: usize, message: String },

    /// Invalid configuration, rejected before any work.
    #[error("config error: {0}")]
    Config(String),

    /// A tensor operation produced NaN or Inf.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn graph(msg: impl Into<String>) -> Self {
        Error::Graph(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
