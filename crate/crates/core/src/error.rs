//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A computation produced NaN or an infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A named graph variable was requested but never registered.
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    /// A graph variable name was registered twice on one tape.
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),

    /// Configuration values are out of range or inconsistent.
    #[error("invalid config: {0}")]
    Config(String),

    /// Dataset content is malformed or inconsistent with its metadata.
    #[error("invalid data: {0}")]
    Data(String),

    /// Dataset file could not be parsed; carries the 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Checkpoint file is malformed or inconsistent with the request.
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    /// An algorithm's input is degenerate (empty, too small, or trivial).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
