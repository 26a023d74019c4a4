use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A numeric evaluation left its valid domain (non-positive denominator, complex spectrum).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A noise or budget calibration has no feasible solution.
    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("schema error: {0}")]
    Schema(String),

    /// A cell could not be parsed; `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("transcript error: {0}")]
    Transcript(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn calibration(msg: impl Into<String>) -> Self {
        Error::Calibration(msg.into())
    }
}
