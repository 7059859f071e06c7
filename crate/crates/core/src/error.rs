use thiserror::Error;

/// Errors raised by the numerical core and the protocol engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    /// The request would allocate beyond a configured resource cap.
    #[error("resource guard: {0}")]
    Resource(String),

    /// An adversarial source description could not be turned into a state.
    #[error("invalid attack specification: {0}")]
    Attack(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
