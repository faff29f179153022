use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate parameter entry `{0}`")]
    DuplicateEntry(String),

    #[error("unknown parameter entry `{0}`")]
    UnknownEntry(String),

    #[error("non-finite gradient in entry `{entry}` at index {index}")]
    NonFiniteGradient { entry: String, index: usize },

    #[error("non-finite function value while probing entry `{entry}` at index {index}")]
    NonFiniteProbe { entry: String, index: usize },

    #[error("invalid learning-rate schedule: {0}")]
    InvalidSchedule(String),

    #[error("quaternion norm {norm} is not unit within tolerance")]
    NonUnitQuaternion { norm: f64 },

    #[error("degenerate rotation: quaternion norm {norm} below 1e-12")]
    DegenerateQuaternion { norm: f64 },

    #[error("degenerate temporal extent: marginal variance {0} below 1e-12")]
    DegenerateTemporal(f64),

    #[error("degenerate scene bounds on axis {axis}")]
    DegenerateBounds { axis: usize },

    #[error("{what} index {index} out of range 0..{len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("plane set is missing plane {0}")]
    MissingPlane(String),

    #[error("invalid plane: {0}")]
    InvalidPlane(String),

    #[error("non-finite loss at iteration {iter}: {breakdown}")]
    NonFiniteLoss { iter: usize, breakdown: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("content hash mismatch for {path}")]
    HashMismatch { path: PathBuf },

    #[error("missing views: {0:?}")]
    MissingViews(Vec<String>),

    #[error("checkpoint has no distortion field")]
    FieldAbsent,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
