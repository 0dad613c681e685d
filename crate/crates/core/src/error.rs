use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Schema {
        file: String,
        line: usize,
        message: String,
    },
    #[error("referential integrity: {0}")]
    Reference(String),
    #[error("{file}:{line}: duplicate key {key} (first seen on line {first_line})")]
    Duplicate {
        file: String,
        line: usize,
        first_line: usize,
        key: String,
    },
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("no data: {0}")]
    Empty(String),
    #[error("calibration leak: model trained on calibration issue {0}")]
    CalibrationLeak(String),
    #[error("alpha {0} is not in the configured grid")]
    AlphaNotInGrid(f64),
    #[error("rule `{rule}`: {message}")]
    Rule { rule: String, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Validation failures are input problems (exit code 1); the rest are runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Schema { .. }
                | Error::Reference(_)
                | Error::Duplicate { .. }
                | Error::Invalid { .. }
                | Error::Config(_)
                | Error::AlphaNotInGrid(_)
                | Error::Rule { .. }
        )
    }
}
