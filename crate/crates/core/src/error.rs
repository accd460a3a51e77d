use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("cannot encode image {path}: {reason}")]
    Encode { path: PathBuf, reason: String },

    #[error("image is not quantized: sample {index} = {value}")]
    NotQuantized { index: usize, value: f64 },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("box ({x},{y},{w},{h}) does not fit in a {width}x{height} image")]
    BoxOutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("unsupported scale factor {0} (expected 2, 3 or 4)")]
    UnsupportedScale(u32),

    #[error("invalid pad spec: {0}")]
    InvalidPad(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("weight file: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("weight file: unsupported version {0}")]
    Version(u32),

    #[error("weight file truncated while reading {0}")]
    Truncated(String),

    #[error("weight file: {0}")]
    InvalidModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("output already exists: {0}")]
    OutputExists(PathBuf),

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
