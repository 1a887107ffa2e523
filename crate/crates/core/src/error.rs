use std::io;

use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is missing, ill-typed or out of range.
    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    /// The requested scenario cannot be realised (e.g. the train cannot brake in time).
    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    /// A sensor period is not an integer multiple of the trajectory sampling period.
    #[error("sensor `{sensor}`: period {period_ns} ns is not a positive multiple of {sample_ns} ns")]
    Schedule { sensor: String, period_ns: i64, sample_ns: i64 },

    /// Malformed bytes or text while decoding a file or stream.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    pub(crate) fn format(message: impl Into<String>) -> Self {
        Error::Format(message.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
