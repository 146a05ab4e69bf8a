//! Crate-wide error type for numerical and modelling failures.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Cholesky failed even after the full jitter escalation schedule.
    #[error("matrix is not positive definite (jitter schedule exhausted at {jitter_cap:.3e})")]
    NotPositiveDefinite { jitter_cap: f64 },

    /// Operand shapes do not line up.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// The Jacobi eigensolver hit its sweep cap before the off-diagonal
    /// norm dropped below tolerance.
    #[error("eigendecomposition did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    /// A deep-kernel operation was requested without network weights.
    #[error("deep kernel requires network weights")]
    MissingNetwork,

    /// All-zero targets make the profiled amplitude degenerate (log 0).
    #[error("targets are identically zero; profiled signal variance is degenerate")]
    ZeroTarget,

    /// Invalid value passed at a construction boundary.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
