use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown vehicle type `{0}`")]
    UnknownVehicleType(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("node {node} has demand {demand} exceeding capacity {capacity}")]
    Unroutable {
        node: usize,
        demand: f64,
        capacity: f64,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("external solver command `{command}` could not be run: {reason}")]
    ExternalSolver { command: String, reason: String },

    #[error("decode error: {message} (nodes {nodes:?})")]
    Decode { message: String, nodes: Vec<usize> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
