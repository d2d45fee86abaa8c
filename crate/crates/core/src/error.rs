use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("signal of {len} samples is shorter than one frame ({frame_len} samples)")]
    SignalTooShort { len: usize, frame_len: usize },

    #[error("window '{window}' with frame {frame_len} and hop {hop} does not satisfy constant overlap-add")]
    NotCola {
        window: &'static str,
        frame_len: usize,
        hop: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown feature set '{0}'")]
    UnknownFeatureSet(String),

    #[error("unknown method '{0}'")]
    UnknownMethod(String),

    #[error("need at least {needed} vectors, got {got}")]
    NotEnoughData { needed: usize, got: usize },

    #[error("requested {requested} neighbors from a database of {available} entries")]
    TooManyNeighbors { requested: usize, available: usize },

    #[error("database is empty")]
    EmptyDatabase,

    #[error("database mismatch: {0}")]
    DatabaseMismatch(String),

    #[error("reference spectrogram is all zero")]
    ZeroReference,

    #[error("distribution does not sum to one (sum = {0})")]
    NotNormalized(f64),

    #[error("audio for source file '{0}' is not loaded")]
    MissingAudio(String),

    #[error("corpus too small for cell {cell}: {reason}")]
    CorpusTooSmall { cell: String, reason: String },

    #[error("malformed wav '{path}': {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("analysis document: {path}: {reason}")]
    Schema { path: String, reason: String },

    #[error("database format: {0}")]
    Format(String),

    #[error("i/o error on '{path}': {source}")]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
