use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric error at iteration {iteration}: {message}")]
    Numeric { iteration: usize, message: String },

    #[error("invariant violated at iteration {iteration}: {message}")]
    Invariant { iteration: usize, message: String },

    #[error("solver error in block {block}: {message}")]
    Solver { block: String, message: String },

    #[error("state error: {0}")]
    State(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Re-stamps numeric and invariant errors with the iteration they occurred at.
    pub fn at_iteration(self, n: usize) -> Self {
        match self {
            Error::Numeric { message, .. } => Error::Numeric { iteration: n, message },
            Error::Invariant { message, .. } => Error::Invariant { iteration: n, message },
            other => other,
        }
    }
}
