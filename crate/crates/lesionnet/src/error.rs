use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by failure class so callers (in particular the CLI)
/// can map them onto stable exit codes: configuration/usage problems,
/// data/format problems, and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shape disagreement. The message names the offending
    /// dimension or parameter.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A caller-supplied argument violates an operation's preconditions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Autodiff misuse: non-scalar loss, variable from a different tape.
    #[error("autodiff error: {0}")]
    Autodiff(String),

    /// Problems with dataset contents (labels, splits, degenerate classes).
    #[error("data error: {0}")]
    Data(String),

    /// Malformed volume or weight files.
    #[error("format error: {0}")]
    Format(String),

    /// Non-finite values where finite ones are required (NaN gradients etc).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
