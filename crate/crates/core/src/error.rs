use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing resource: {0}")]
    MissingResource(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidInput(_) => 2,
            Error::MissingResource(_) => 3,
            Error::Numeric(_) | Error::Diverged(_) => 4,
            Error::Format { .. } | Error::Io(_) => 1,
        }
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
