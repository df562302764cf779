use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent model, dataset or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid argument to an operation (bad counts, out-of-range values).
    #[error("input error: {0}")]
    Input(String),

    /// A row-level problem found while reading a ratings or truth file.
    #[error("ingestion error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    /// The target density could not be evaluated.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// No finite starting point was found for a chain.
    #[error("initialization failed for chain {chain} after {attempts} attempts")]
    Initialization { chain: usize, attempts: usize },

    /// A convergence diagnostic is not defined for the supplied draws.
    #[error("undefined diagnostic: {0}")]
    UndefinedDiagnostic(String),

    /// A summary statistic is not defined for the supplied data.
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
