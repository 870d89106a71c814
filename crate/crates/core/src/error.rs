use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of vocabulary for `{field}` (size {size})")]
    Vocabulary {
        field: &'static str,
        index: usize,
        size: usize,
    },

    #[error("non-finite value produced in {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no tasks left after ingestion ({dropped} task{} dropped)", if *.dropped == 1 { "" } else { "s" })]
    EmptyBank { dropped: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("unknown task {0}")]
    Lookup(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
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

    /// Prefixes a numeric failure with the stage it happened in.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Numeric(what) => Error::Numeric(format!("{stage}: {what}")),
            other => other,
        }
    }

    /// Process exit code for command-line front ends: 1 for configuration
    /// problems, 3 for numeric failures, 2 for everything data related.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Argument(_) => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
