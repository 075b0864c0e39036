use alloc::string::String;

pub type Result<T, E = GeoError> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("power iteration did not converge in {iterations} iterations (last estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("classification undefined: transformed row has zero norm")]
    ClassificationUndefined,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),
}

impl GeoError {
    /// True for failures of a numerical procedure rather than of its inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            GeoError::NoConvergence { .. } | GeoError::NonFinite(_) | GeoError::Synthesis(_)
        )
    }
}
