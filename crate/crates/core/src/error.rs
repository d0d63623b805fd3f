use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("causality violation: measurement at t={time} precedes earliest arrival t={earliest}")]
    CausalityViolation { time: f64, earliest: f64 },

    #[error("resource exhausted: {0}")]
    ResourceExhausted(String),

    #[error("rejected instrument: {0}")]
    RejectedInstrument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
