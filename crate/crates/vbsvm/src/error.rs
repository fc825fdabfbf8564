//! Error taxonomy shared by every module in the crate.
//!
//! Errors fall into four groups that callers (and the command-line frontend)
//! treat differently:
//!
//! * [`Error::Dimension`] — caller passed structurally incompatible inputs
//!   (row/column counts disagree, empty design, ...).
//! * [`Error::Domain`] — a scalar argument is outside the mathematical domain
//!   of the function (negative scale, probability outside `(0, 1)`, ...).
//! * [`Error::Data`] — the data content is unusable even though its shape is
//!   fine (single-class labels, a column that is missing in every row, ...).
//! * [`Error::Numerical`] — the computation itself broke down (a matrix that
//!   stays non-SPD after jitter escalation, a non-finite objective). These
//!   indicate a failed fit rather than a caller mistake.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Structurally incompatible inputs (shape mismatch, empty input).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Data content unusable for the requested operation.
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure during iteration; `iteration` is the sweep or scan
    /// index at which the failure was detected (0-based), when known.
    #[error("numerical failure{}: {message}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        message: String,
        iteration: Option<usize>,
    },

    /// I/O or file-format failure while reading or writing data files.
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Shorthand for a [`Error::Numerical`] without an iteration index.
    pub fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            iteration: None,
        }
    }

    /// Shorthand for a [`Error::Numerical`] tagged with an iteration index.
    pub fn numerical_at(message: impl Into<String>, iteration: usize) -> Self {
        Error::Numerical {
            message: message.into(),
            iteration: Some(iteration),
        }
    }

    /// Prefix the message with a context label (for example the replicate
    /// index of an evaluation run), keeping the error's category.
    pub fn with_context(self, context: &str) -> Self {
        match self {
            Error::Dimension(m) => Error::Dimension(format!("{context}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{context}: {m}")),
            Error::Data(m) => Error::Data(format!("{context}: {m}")),
            Error::Numerical { message, iteration } => Error::Numerical {
                message: format!("{context}: {message}"),
                iteration,
            },
            Error::Io(m) => Error::Io(format!("{context}: {m}")),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
