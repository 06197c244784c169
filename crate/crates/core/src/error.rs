use thiserror::Error;

/// Errors shared by all library modules.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two operands had incompatible shapes or lengths.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A physical or structural constraint was violated.
    #[error("constraint violation: {0}")]
    Constraint(String),

    /// An operation was called in a state that does not support it.
    #[error("invalid state: {0}")]
    State(String),

    /// A configuration value is inconsistent or unusable.
    #[error("config error: {0}")]
    Config(String),

    /// A serialized artifact could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
