//! Error type shared across the crate.

/// Errors produced by validation, parsing, and the numerical routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up; the message names both sides.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An input violates a documented precondition (weights, ranges, config values).
    #[error("invalid input: {0}")]
    Validation(String),
    /// A numerical operation failed (singular factor, non-finite objective, ...).
    #[error("numerical failure: {0}")]
    Numeric(String),
    /// A text input could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// A requested construction has no valid outcome (e.g. triplet sampling
    /// from a single-class batch).
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code convention: 1 for validation-class errors, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 2,
            _ => 1,
        }
    }
}
