//! Error type shared by the library and the command-line front end.

use std::path::PathBuf;

/// Errors produced by the clustering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("weak supervision requires labels")]
    MissingLabels,

    #[error("label length mismatch: predicted={predicted}, truth={truth}")]
    LengthMismatch { predicted: usize, truth: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("invalid tree operation: {0}")]
    InvalidTreeOp(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("partitions overlap at point {0}")]
    OverlappingPartitions(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
