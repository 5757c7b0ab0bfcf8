use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data (sizes, dimensions, file contents).
    #[error("input error: {0}")]
    Input(String),

    /// An out-of-range or otherwise invalid parameter.
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// An empirical null whose metadata does not match the query it is applied to.
    #[error("calibration mismatch: {0}")]
    Calibration(String),

    /// Configuration validation failure; `field` is the dotted path of the offending entry.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Closure form for `map_err`.
    pub(crate) fn at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |e| Error::io(path, e)
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Config { .. } => 2,
            Error::Input(_) | Error::Numeric(_) | Error::Io { .. } | Error::Json(_) => 3,
            Error::Calibration(_) => 4,
        }
    }
}
