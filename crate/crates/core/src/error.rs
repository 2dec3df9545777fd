use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("missing metadata key `{0}`")]
    MissingMeta(String),

    #[error("surfel {index} at ({x:.4}, {y:.4}, {z:.4}) lies outside the reconstruction frustum")]
    OutsideFrustum { index: usize, x: f64, y: f64, z: f64 },

    #[error("negative measurement bin at flat index {index} (value {value})")]
    NegativeBin { index: usize, value: f64 },

    #[error("grid of {voxels} voxels exceeds the direct-summation cap of {cap}")]
    OracleCapExceeded { voxels: usize, cap: usize },

    #[error("solver diverged at iteration {iteration}: objective is not finite")]
    Diverged { iteration: usize },

    #[error("empty mask: no pixel is foreground in both maps")]
    EmptyMask,

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
}

pub type Result<T> = std::result::Result<T, Error>;
