use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Two objects that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    /// The requested parameters cannot be realized.
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    /// Randomized construction did not produce a valid object in time.
    #[error("construction did not verify after {attempts} attempts")]
    RetryLimit { attempts: usize },
    #[error("unknown message id {0}")]
    UnknownMessage(usize),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
