use thiserror::Error;

/// Errors raised by the numerical pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The measure kind has no meaning for this operation (e.g. atoms in a principal value).
    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),

    /// A backward Loewner trajectory reached the unit circle.
    #[error("trajectory absorbed into the hull at time {time}")]
    Absorbed { time: f64 },

    /// The drift vanishes identically, so it has no isolated equilibria.
    #[error("drift is identically zero")]
    DegenerateDrift,

    #[error("internal error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
