use std::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid argument: out-of-domain value, dimension mismatch, overflow.
    Domain(String),
    /// Malformed or inconsistent input data (CSV parsing, dataset construction).
    Data(String),
    /// A matrix required to be invertible is singular.
    Singular(String),
    /// The dataset cannot identify the model parameters.
    NonIdentifiable(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Singular(msg) => write!(f, "singular matrix: {msg}"),
            Error::NonIdentifiable(msg) => write!(f, "non-identifiable: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
