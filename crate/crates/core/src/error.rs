use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input.
    #[error("invalid input: {0}")]
    Input(String),

    /// A scalar function produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A solve was requested that has no unique solution.
    #[error("singular system: {0}")]
    Singular(String),

    /// A documented precondition of the operation is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A ratio would divide by an identically zero risk.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A combination the library deliberately does not certify.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
