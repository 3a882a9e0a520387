use std::path::PathBuf;

use catalpa::HeapError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Heap(#[from] HeapError),
    #[error("disaggregation needs a server run, got a {0} run")]
    NotMixed(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Heap(HeapError::Config(_)) => 2,
            _ => 1,
        }
    }
}
