use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("scan has no points within the sensor range gate")]
    EmptyScan,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: String },

    #[error("training diverged at epoch {epoch}: mean loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("no positive pairs found")]
    NoPositivePairs,

    #[error("no successful localizations")]
    NoSuccesses,

    #[error("map is empty")]
    EmptyMap,

    #[error("too few correspondences: {found} < {required}")]
    NoOverlap { found: usize, required: usize },

    #[error("degenerate trajectory: waypoints {0} and {1} coincide")]
    DegenerateWaypoints(usize, usize),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported file version {0}")]
    Version(u32),

    #[error("checkpoint config hash mismatch")]
    ConfigHash,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::DegenerateWaypoints(..) => 2,
            Error::NonFinite { .. } | Error::Diverged { .. } => 4,
            _ => 3,
        }
    }
}
