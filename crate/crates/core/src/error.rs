use thiserror::Error;

use crate::types::{SensorId, TargetClass};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{sensor:?} cannot emit class {class:?}")]
    ClassNotAllowed { sensor: SensorId, class: TargetClass },

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    Dimensions {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("checksum mismatch")]
    Checksum,

    #[error("CPR decode failed: {0}")]
    Cpr(&'static str),

    #[error("training failed: {0}")]
    Training(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
