use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgeError {
    /// An argument lies outside the domain an operation accepts.
    #[error("input out of domain: {0}")]
    InputDomain(String),

    /// A non-finite value appeared in an intermediate computation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Caller broke a shape or ordering contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AgeError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(AgeError::InputDomain(msg.into()))
}
