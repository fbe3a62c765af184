use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An invalid parameter or an inconsistent combination of parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A continuous-time lookup into a drive signal fell outside its span.
    #[error("input time {t} outside drive span [{start}, {end}]")]
    InputRange { t: f64, start: f64, end: f64 },

    /// Not enough history (or future) samples to build a target or feature row.
    #[error("range error: {0}")]
    Range(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
