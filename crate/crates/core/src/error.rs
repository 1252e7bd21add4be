use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range data supplied by the caller.
    #[error("input error: {0}")]
    Input(String),

    /// Invalid parameters or an inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric routine failed to produce a trustworthy value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Exhaustive closed testing was asked to enumerate too many hypotheses.
    #[error("size error: m = {m} exceeds the exhaustive enumeration limit of {limit}")]
    TooLarge { m: usize, limit: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Input(_) | Error::TooLarge { .. } | Error::Io(_) => 1,
            Error::Config(_) => 2,
            Error::Numeric(_) => 3,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
