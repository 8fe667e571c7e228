use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions {0:?}: every axis must be positive")]
    InvalidDims([usize; 3]),
    #[error("invalid spacing {0:?}: every component must be finite and > 0")]
    InvalidSpacing([f64; 3]),
    #[error("connectivity must be 6 or 26, got {0}")]
    InvalidConnectivity(u8),
    #[error("data length mismatch: expected {expected} voxels, found {found}")]
    DataLength { expected: usize, found: usize },
    #[error("volume dimensions differ: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("volume spacings differ: {0:?} vs {1:?}")]
    SpacingMismatch([f64; 3], [f64; 3]),
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("unsupported {what} `{value}` in {path}")]
    Unsupported {
        path: PathBuf,
        what: &'static str,
        value: String,
    },
    #[error("uint8 volume contains value {value} at voxel {index}; masks must be 0/1")]
    NonBinaryMask { index: usize, value: u8 },
    #[error("expected a {expected} volume, found {found}")]
    WrongPayload {
        expected: &'static str,
        found: &'static str,
    },
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON")]
    Json(#[from] serde_json::Error),
    #[error("invalid CSV")]
    Csv(#[from] csv::Error),
    #[error("empty skeleton: the mask contains no vasculature")]
    EmptySkeleton,
    #[error("surface set is empty")]
    EmptySurface,
    #[error("neighbour count m must be >= 1")]
    InvalidNeighbourCount,
    #[error("skeleton voxel {0:?} is not foreground in the mask")]
    SkeletonOutsideMask([usize; 3]),
    #[error("labeled skeleton and radius map cover different voxels")]
    VoxelSetMismatch,
    #[error("label {0} has no row in the branch table")]
    MissingBranch(u32),
    #[error("radius list is empty")]
    EmptyRadii,
    #[error("scale count must be >= 2, got {0}")]
    InvalidScaleCount(usize),
    #[error("invalid loss input: {0}")]
    InvalidLossInput(String),
    #[error("invalid phantom spec: {0}")]
    InvalidPhantom(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
