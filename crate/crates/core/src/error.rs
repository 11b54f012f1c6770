use thiserror::Error;

/// Errors raised by the synthesis, certification and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Bad caller input: wrong dimensions, out-of-range indices, disturbances outside `[-a, a]`.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A matrix or certificate failed a structural check (symmetry, positive definiteness, ...).
    #[error("validation failed: {0}")]
    Validation(String),
    /// An optimizer or solver could not produce a result.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A requested analysis is not applicable to the given configuration.
    #[error("configuration error: {0}")]
    Configuration(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
