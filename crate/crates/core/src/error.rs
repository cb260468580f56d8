//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed file contents: bad headers, field counts, unparsable numbers.
    #[error("format error: {0}")]
    Format(String),

    /// Data violates a documented invariant (bounds, ordering, value domain).
    #[error("validation error: {0}")]
    Validation(String),

    /// Argument outside the operation's domain.
    #[error("argument error: {0}")]
    Argument(String),

    /// Value outside a permitted range, e.g. a timestamp outside the trajectory span.
    #[error("range error: {0}")]
    Range(String),

    /// Operation invoked in an invalid state.
    #[error("state error: {0}")]
    State(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by invalid user input rather than runtime failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::Validation(_) | Error::Argument(_) | Error::Range(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
