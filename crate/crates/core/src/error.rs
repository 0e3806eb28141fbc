//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the pipeline.
///
/// Data-loading variants carry the file and record position so a bad
/// manifest entry can be located without re-running under a debugger.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },

    #[error("cannot decode image {path}: {detail}")]
    ImageDecode { path: PathBuf, detail: String },

    #[error("{context}: expected 22 landmarks, found {found}")]
    LandmarkCount { context: String, found: usize },

    #[error("{context}: frame indices must be strictly increasing ({prev} then {next})")]
    NonMonotoneFrames {
        context: String,
        prev: i64,
        next: i64,
    },

    #[error("{context}: stored pain {stored} disagrees with the AU-derived score {derived}")]
    PainAuMismatch {
        context: String,
        stored: f64,
        derived: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("region '{region}' lies fully outside the {width}x{height} image")]
    RoiOutsideImage {
        region: String,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("eigen solver did not converge within {iterations} iterations")]
    EigenNoConvergence { iterations: usize },

    #[error("training set has no positive-pain frames")]
    NoPositiveFrames,

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("{metric} undefined: {detail}")]
    MetricUndefined { metric: &'static str, detail: String },

    #[error("missing action unit AU{0}")]
    MissingActionUnit(u8),

    #[error("mlp training diverged (loss became non-finite at epoch {epoch})")]
    MlpDiverged { epoch: usize },

    #[error("model file {path} is not usable: {detail}")]
    ModelFormat { path: PathBuf, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn manifest(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Manifest {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
