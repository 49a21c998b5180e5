use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A user supplied value is out of range. `key` names the offending
    /// parameter so front ends can report it verbatim.
    #[error("invalid `{key}`: {msg}")]
    Invalid { key: String, msg: String },

    #[error("cannot parse `{key}`: {msg}")]
    Parse { key: String, msg: String },

    #[error("{model} has no closed-form heat kernel")]
    NoClosedForm { model: String },

    #[error("geodesic step of length {len} exceeds the maximal step {max} of {model}")]
    StepTooLarge { model: String, len: f64, max: f64 },

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: usize },

    #[error("bundle rank {0} is not supported (maximum {max})", max = crate::linalg::MAX_RANK)]
    UnsupportedRank(usize),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("{0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid { key: key.into(), msg: msg.into() }
    }

    pub fn parse(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse { key: key.into(), msg: msg.into() }
    }

    /// The parameter name attached to the error, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            Error::Invalid { key, .. } | Error::Parse { key, .. } => Some(key),
            _ => None,
        }
    }
}
