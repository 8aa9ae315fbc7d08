use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input (dimension mismatch, zero direction, bad file).
    #[error("input error: {0}")]
    Input(String),
    /// The request is valid but outside what the implementation handles.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A lemma hypothesis does not hold on the concrete instance.
    #[error("hypothesis of {lemma} fails at index {index}: {detail}")]
    Hypothesis {
        lemma: String,
        index: usize,
        detail: String,
    },
    /// The polyline is not self-contracted; witness positions count from 1.
    #[error("not self-contracted, witness (i, j, k) = ({}, {}, {})", .witness.0, .witness.1, .witness.2)]
    NotSelfContracted { witness: (usize, usize, usize) },
    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn hypothesis(lemma: &str, index: usize, detail: impl Into<String>) -> Error {
    Error::Hypothesis {
        lemma: lemma.to_string(),
        index,
        detail: detail.into(),
    }
}
