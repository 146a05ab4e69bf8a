//! Dense symmetric linear algebra and seeded randomness.
//!
//! Everything here is sized for desk-scale models (n up to a few hundred):
//! unblocked Cholesky with a scale-aware jitter escalation schedule, cyclic
//! Jacobi for symmetric eigenvalues, and ChaCha20-backed sampling so runs are
//! reproducible from a single 64-bit seed.

mod cholesky;
mod eigen;
mod matrix;
mod random;

pub use cholesky::{cholesky_with_jitter, inv_spd, logdet, solve_spd, CholFactor};
pub use eigen::sym_eigenvalues;
pub use matrix::SymMatrix;
pub use random::{mvn_sample, rng_from_seed, Seed};
