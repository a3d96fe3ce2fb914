use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected length {expected}, got {got}")]
    InputShape { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: i64, classes: usize },
    #[error("invalid probability vector: {0}")]
    Probability(String),
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("not fitted: {0}")]
    Unfitted(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
