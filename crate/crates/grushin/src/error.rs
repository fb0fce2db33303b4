use thiserror::Error;

/// Failure modes of the toolkit.
///
/// The split between [`Error::is_validation`] and the rest drives the CLI exit
/// status: bad inputs are the caller's fault, everything else is numerical.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("grid too coarse for mode {n}: h = {h} exceeds {limit}")]
    Resolution { n: usize, h: f64, limit: f64 },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Resolution { .. } | Error::Geometry(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
