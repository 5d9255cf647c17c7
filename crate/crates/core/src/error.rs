use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sidecar not found: {0}")]
    SidecarNotFound(PathBuf),

    #[error("payload not found: {0}")]
    PayloadNotFound(PathBuf),

    #[error("corrupt raster {path}: expected {expected} bytes, found {actual}")]
    Corrupt {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported raster format_version {found} in {path} (supported: 1)")]
    UnsupportedVersion { path: PathBuf, found: u32 },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid dimensions {width}x{height}: {reason}")]
    Dimensions {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{field} out of domain: {value} (allowed {allowed})")]
    Domain {
        field: &'static str,
        value: f64,
        allowed: &'static str,
    },

    #[error("mask is not binary: {offending} pixel(s) outside {{0, 1}}")]
    NonBinaryMask { offending: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("placement failed: {0}")]
    Placement(String),

    #[error("no clean-sea neighborhood around instance {0}")]
    EmptyNeighborhood(u32),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("lookup table too coarse: max inversion error {max_error:.4} m/s exceeds {limit} m/s; use finer grid spacing")]
    LutTooCoarse { max_error: f64, limit: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("scene {scene_id}: {source}")]
    Scene {
        scene_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_scene(self, scene_id: &str) -> Self {
        Error::Scene {
            scene_id: scene_id.to_owned(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Domain { .. } | Error::LutTooCoarse { .. } => {
                ErrorClass::Config
            }
            Error::Io { .. }
            | Error::SidecarNotFound(_)
            | Error::PayloadNotFound(_)
            | Error::Corrupt { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Json { .. }
            | Error::Dimensions { .. }
            | Error::DimensionMismatch { .. }
            | Error::NonBinaryMask { .. }
            | Error::EmptyNeighborhood(_)
            | Error::Input(_) => ErrorClass::Data,
            Error::Placement(_) => ErrorClass::Config,
            Error::Internal(_) => ErrorClass::Internal,
            Error::Scene { source, .. } => source.class(),
        }
    }
}
