//! Error type shared across the crate.

use thiserror::Error;

/// Unified error type for graph loading, geometry, tree construction,
/// training and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A text input could not be parsed; carries the 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Shapes or lengths of two inputs do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    Validation(String),

    /// The mathematical operation is undefined for this input
    /// (e.g. entropy of an edgeless graph, conductance of the full set).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input exceeds a documented size limit of an exhaustive routine.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A geometric input is degenerate (e.g. lightlike weighted sum).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Training aborted (non-finite loss or parameter).
    #[error("training failed: {0}")]
    Training(String),

    /// An object was used in an invalid state (e.g. double backward).
    #[error("state error: {0}")]
    State(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
