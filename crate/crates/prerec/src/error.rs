use std::path::PathBuf;

/// Error type shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input data, reported with the 1-based row that failed.
    #[error("ingestion error at row {row} of {path}: {message}")]
    Ingest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    /// Invalid configuration or arguments.
    #[error("config error: {0}")]
    Config(String),

    /// Inconsistent or missing data discovered after ingestion.
    #[error("data error: {0}")]
    Data(String),

    /// Non-finite values or other numerical failures.
    #[error("numerical error: {0}")]
    Numeric(String),

    /// Remote encoder failures after retries were exhausted.
    #[error("encoder error: {0}")]
    Encoder(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Ingest { .. } | Error::Data(_) | Error::Io { .. } | Error::Json { .. } => 3,
            Error::Numeric(_) | Error::Encoder(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
