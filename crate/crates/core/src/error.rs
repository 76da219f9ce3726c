use std::path::PathBuf;

use thiserror::Error;

use crate::ingest::RowError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    HeaderMismatch { expected: String, found: String },

    #[error(transparent)]
    Row(#[from] RowError),

    #[error("invalid generator spec: {0}")]
    InfeasibleSpec(String),

    #[error("session {session} contains event type `{event_type}` outside profile `{profile}`")]
    ProfileMismatch {
        session: String,
        event_type: String,
        profile: String,
    },

    #[error("input is empty")]
    EmptyInput,

    #[error("only one class present in labels")]
    SingleClass,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("values outside [0, 1]: found {value} in cluster {cluster}")]
    Unscaled { cluster: usize, value: f64 },

    #[error("matrix has no cluster assignment")]
    MissingClusters,

    #[error("class {class} has no labeled representative")]
    MissingClass { class: u8 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
