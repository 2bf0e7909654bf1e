use std::io;

use thiserror::Error;

/// Errors raised by the estimators, detectors, evaluation code and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("column has zero range and cannot be gaussianized")]
    DegenerateColumn,

    #[error("cannot fit model: {0}")]
    Unfittable(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("detector kind mismatch: expected {expected}, got {got}")]
    KindMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("curve undefined: {0}")]
    UndefinedCurve(String),

    #[error("negentropy trace was not recorded for this model")]
    NotRecorded,

    #[error("format error: {0}")]
    Format(#[from] FormatError),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// `true` for malformed input files and I/O failures, as opposed to
    /// numerical or fitting failures on well-formed data.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::Parse { .. } | Error::Io(_) | Error::Json(_)
        )
    }
}

/// Binary container problems (model and raster files).
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("unknown model kind tag {0}")]
    UnknownKind(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("declared dimensions overflow: {0}")]
    DimensionOverflow(String),

    #[error("invalid field: {0}")]
    InvalidField(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
