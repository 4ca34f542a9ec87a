use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid severity level {level} for {kind}")]
    InvalidLevel { kind: String, level: i32 },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("manifest {path}, row {row}: {message}")]
    Manifest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("scorer handshake timed out after {0:?}")]
    HandshakeTimeout(std::time::Duration),

    #[error("scorer protocol error: {0}")]
    Protocol(String),

    #[error("class mismatch between scorer and dataset: {0}")]
    ClassMismatch(String),

    #[error("score out of range [0,1]: {value} (id `{id}`, class `{class}`)")]
    ScoreRange { id: String, class: String, value: f64 },

    #[error("predictions missing for {} id(s): {}", .0.len(), .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("misaligned inputs: {0}")]
    Alignment(String),

    #[error("result grids do not match: {0}")]
    GridMismatch(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error for {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
