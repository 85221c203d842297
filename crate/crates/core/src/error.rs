use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("planner failure: {0}")]
    Planner(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code: 1 for numeric failures, 2 for bad input or config.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::Planner(_) => 1,
            Error::InvalidInput(_) | Error::Config(_) => 2,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
        }
    }
}
