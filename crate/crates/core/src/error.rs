use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not unit lower-triangular: {0}")]
    NotUnitLower(String),

    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("method {0} has no single-step coefficients")]
    NoCoefficients(String),

    #[error(transparent)]
    Csv(#[from] CsvError),
}

/// Wraps I/O and CSV failures so that [`Error`] stays `Clone + PartialEq`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("csv output failed: {0}")]
pub struct CsvError(pub String);

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(CsvError(e.to_string()))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Csv(CsvError(e.to_string()))
    }
}

pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::ShapeMismatch {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
