use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point} lies outside the domain: {reason}")]
    Domain { point: String, reason: String },

    #[error("singular evaluation at {point}: {reason}")]
    Singular { point: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{count} flagged sample(s) violate the radius cap (first at {first})")]
    CapViolation { count: usize, first: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(z: impl std::fmt::Display, reason: impl Into<String>) -> Self {
        Error::Domain { point: z.to_string(), reason: reason.into() }
    }

    pub(crate) fn singular(z: impl std::fmt::Display, reason: impl Into<String>) -> Self {
        Error::Singular { point: z.to_string(), reason: reason.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
