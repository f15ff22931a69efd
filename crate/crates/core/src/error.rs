use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error(
        "disconnected neighbor graph: node {from} cannot reach node {to}; increase n_neighbors (k)"
    )]
    DisconnectedGraph { from: usize, to: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("network spec invalid at layer {layer}: {reason}")]
    SpecValidation { layer: String, reason: String },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("config error at {pointer}: {reason}")]
    Config { pointer: String, reason: String },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: String,
        #[source]
        source: Box<Error>,
    },

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

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short code, used by the CLI error line and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NumericalFailure(_) => "numerical-failure",
            Error::DisconnectedGraph { .. } => "disconnected-graph",
            Error::EmptyDataset(_) => "empty-dataset",
            Error::SpecValidation { .. } => "spec-validation",
            Error::Divergence { .. } => "divergence",
            Error::Config { .. } => "config",
            Error::Fold { source, .. } => source.code(),
            Error::Io { .. } => "io",
            Error::Csv(_) | Error::Json(_) | Error::Format(_) => "format",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
