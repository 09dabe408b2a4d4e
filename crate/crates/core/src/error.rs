use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pose ({x:.3}, {y:.3})")]
    InvalidPose { x: f64, y: f64 },

    #[error("nothing mapped")]
    NothingMapped,

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: String, reason: String },

    #[error("not enough free cells: need {needed}, have {available}")]
    NotEnoughFree { needed: usize, available: usize },

    #[error("uncertainty region blocked: no free cell within {k} m of ({x:.3}, {y:.3})")]
    UncertaintyRegionBlocked { x: f64, y: f64, k: f64 },

    #[error("episode sampling failed after {0} attempts")]
    SamplingFailed(usize),

    #[error("no frontier")]
    NoFrontier,

    #[error("unreachable subgoal ({x:.3}, {y:.3})")]
    UnreachableSubgoal { x: f64, y: f64 },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("map format: {0}")]
    MapFormat(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty outcome list")]
    EmptyOutcomes,

    #[error("config line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn param(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
