use crate::linalg::CMatrix;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid block structure: {0}")]
    InvalidBlocks(String),

    #[error("matrix is not in {0}")]
    NotInSubalgebra(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// The input admits no factorization through an outer element. The
    /// witness is a unit vector `d` of the diagonal algebra with `f d` in the
    /// closed span of `f A0`.
    #[error("not factorizable: f d lies in span(f A0) for a nonzero diagonal d (sigma_min = {sigma_min:e})")]
    NotFactorizable { sigma_min: f64, witness: CMatrix },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("eigensolver failed to converge")]
    EigenFailure,

    #[error("parse error in `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
