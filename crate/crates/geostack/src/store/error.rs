use std::path::PathBuf;

use geostack_core::GeoError;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("truncated payload: need {needed} bytes, have {available}")]
    Truncated { needed: u64, available: u64 },
    #[error("{extra} unexpected bytes after the payload")]
    TrailingBytes { extra: u64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("stored raw OE {stored:e} disagrees with recomputed {recomputed:e}")]
    OeMismatch { stored: f64, recomputed: f64 },
    #[error("digest mismatch for {path}: expected {expected}, found {found}")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("invalid UTF-8 in {0}")]
    Utf8(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Invalid(#[from] GeoError),
}

impl StoreError {
    /// Stable identifier of the failure kind.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Io { .. } => "io",
            StoreError::BadMagic { .. } => "bad-magic",
            StoreError::VersionMismatch { .. } => "version-mismatch",
            StoreError::Truncated { .. } => "truncated-payload",
            StoreError::TrailingBytes { .. } => "trailing-bytes",
            StoreError::NonFinite(_) => "non-finite",
            StoreError::InvalidHeader(_) => "invalid-header",
            StoreError::OeMismatch { .. } => "oe-mismatch",
            StoreError::DigestMismatch { .. } => "digest-mismatch",
            StoreError::Utf8(_) => "invalid-utf8",
            StoreError::Json(_) => "invalid-json",
            StoreError::Csv(_) => "csv",
            StoreError::Invalid(_) => "invalid-content",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type StoreResult<T> = Result<T, StoreError>;
