use thiserror::Error;

/// Errors raised by the geometric primitives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },

    #[error("matrix is not positive definite: min eigenvalue {min:e}, max eigenvalue {max:e}")]
    NotPositiveDefinite { min: f64, max: f64 },

    #[error("determinant {det} is not 1 (tolerance 1e-10)")]
    NotUnitDeterminant { det: f64 },

    #[error("malformed matrix: {0}")]
    Malformed(String),

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },

    #[error("the cone apex has no matrix representative")]
    ApexHasNoMatrix,

    #[error("operation undefined at the cone apex: {0}")]
    ApexInput(&'static str),

    #[error("Frechet mean did not converge after {iterations} iterations (residual {residual:e})")]
    MeanNoConvergence { iterations: usize, residual: f64 },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("singular matrix")]
    Singular,
}

pub type Result<T, E = GeomError> = std::result::Result<T, E>;
