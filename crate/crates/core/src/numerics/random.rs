use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::cholesky::CholFactor;
use crate::error::{Error, Result};

/// 64-bit seed for every random stream in the crate.
///
/// Streams are ChaCha20 keyed via `seed_from_u64`; standard normals come from
/// the ziggurat sampler in `rand_distr`. Identical seeds give bitwise
/// identical streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    /// Derive an independent stream for a sub-task (splitmix64 mixing), so
    /// one user-facing seed can feed several generators without overlap.
    pub fn derive(self, stream: u64) -> Seed {
        let mut z = self
            .0
            .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        Seed(z ^ (z >> 31))
    }
}

pub fn rng_from_seed(seed: Seed) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed.0)
}

/// Draw `mean + L z` with `z ~ N(0, I)` from the seeded stream.
pub fn mvn_sample(mean: &[f64], cov_factor: &CholFactor, seed: Seed) -> Result<Vec<f64>> {
    let n = cov_factor.n();
    if mean.len() != n {
        return Err(Error::DimensionMismatch {
            context: "mvn_sample",
            expected: n,
            got: mean.len(),
        });
    }
    let mut rng = rng_from_seed(seed);
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let lz = cov_factor.mul_lower(&z)?;
    Ok(mean.iter().zip(&lz).map(|(m, v)| m + v).collect())
}
