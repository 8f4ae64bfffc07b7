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

    #[error("malformed header {path}: {message}")]
    Header { path: PathBuf, message: String },

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),

    #[error("non-finite value at linear index {index}")]
    NonFinite { index: usize },

    #[error("label value {value} does not fit in 16 bits")]
    LabelOverflow { value: u64 },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch { left: [usize; 3], right: [usize; 3] },

    #[error("dims {dims:?} too small, need at least {min} voxels per axis")]
    DimsTooSmall { dims: [usize; 3], min: usize },

    #[error("degenerate intensity distribution: {0}")]
    DegenerateDistribution(String),

    #[error("no random-convolution net supplied for label {0}")]
    MissingNet(u16),

    #[error("label sets differ: maps cover {maps:?}, nets cover {nets:?}")]
    LabelSetMismatch { maps: Vec<u16>, nets: Vec<u16> },

    #[error("invalid network: {0}")]
    InvalidNet(String),

    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),

    #[error("input has zero Frobenius norm but the reference does not")]
    ZeroNorm,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),

    #[error("unsatisfiable phantom spec: {0}")]
    Unsatisfiable(String),

    #[error("json error: {0}")]
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
