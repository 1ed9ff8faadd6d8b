use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by tensor arithmetic, the tape, models and the training harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("{op}: empty reduction group for shape {shape:?} over axes {axes:?}")]
    EmptyReduction {
        op: &'static str,
        shape: Vec<usize>,
        axes: Vec<usize>,
    },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("backward: root must be scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("label {label} at position {index} is outside [0, {num_classes})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Malformed dataset files (IDX and CIFAR binary).
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("idx: unrecognized magic number {0:#010x}")]
    BadMagic(u32),

    #[error("idx: truncated file, expected {expected} bytes but found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("idx: dimension sizes {dims:?} overflow the addressable size")]
    DimensionOverflow { dims: Vec<u32> },

    #[error("cifar: file size {len} is not a multiple of the {record}-byte record; partial record at offset {offset}")]
    RecordSize { len: u64, record: u64, offset: u64 },

    #[error("{format}: {extra} unexpected trailing bytes")]
    TrailingBytes { format: &'static str, extra: u64 },

    #[error("image and label files disagree: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("idx: expected a {expected}-dimensional array, got dimensions {dims:?}")]
    Rank { expected: usize, dims: Vec<usize> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }
}
