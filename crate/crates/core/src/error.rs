use thiserror::Error;

/// Errors raised by the policies, environments and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A call sequence violated a stateful contract (e.g. observe without select).
    #[error("logic error: {0}")]
    Logic(String),

    /// An experiment configuration is incomplete or out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn logic(msg: impl Into<String>) -> Error {
    Error::Logic(msg.into())
}
