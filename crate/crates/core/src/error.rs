use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sparse matrix: {0}")]
    InvalidSparse(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("node {node} has degree 0; {strategy} normalization is undefined for isolated nodes")]
    IsolatedNode { node: usize, strategy: &'static str },

    #[error("missing dataset file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },

    #[error("class {class} has {available} nodes, {required} required")]
    ClassTooSmall {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dense closed form refused: n = {n} exceeds the verification limit {max_n}")]
    TooLargeForDense { n: usize, max_n: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },

    #[error("graph has no edges")]
    NoEdges,

    #[error("noise target {target} unreachable; achievable range is [{min}, {max}]")]
    UnreachableNoise { target: f64, min: f64, max: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
