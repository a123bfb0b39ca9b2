use thiserror::Error;

/// Validation failures for market primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("price box requires 0 <= lower < upper and dim >= 1 (got [{lower}, {upper}], dim {dim})")]
    InvalidBox { lower: f64, upper: f64, dim: usize },
    #[error("B is not negative definite: largest eigenvalue of (B+Bᵀ)/2 is {0}")]
    NotNegativeDefinite(f64),
    #[error("non-finite or negative entry in {0}")]
    InvalidEntry(&'static str),
    #[error("horizon must be at least 1")]
    EmptyHorizon,
}
