use super::matrix::SymMatrix;
use crate::error::{Error, Result};

/// Jitter escalation schedule, relative to the mean diagonal `trace/n`:
/// first try no jitter, then 1e-10 * (trace/n) growing tenfold per attempt
/// up to 1e-4 * (trace/n).
const JITTER_START_REL: f64 = 1e-10;
const JITTER_CAP_REL: f64 = 1e-4;

/// Lower-triangular Cholesky factor of `A + jitter_used * I`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    n: usize,
    lower: Vec<f64>, // row-major, strictly-upper entries are zero
    jitter_used: f64,
}

impl CholFactor {
    /// Wrap an explicit lower-triangular factor. Entries above the diagonal
    /// must be zero; the diagonal may be zero (degenerate covariances are
    /// legal for sampling, where L = 0 draws the mean exactly).
    pub fn from_lower(n: usize, lower: Vec<f64>, jitter_used: f64) -> Result<Self> {
        if lower.len() != n * n {
            return Err(Error::DimensionMismatch {
                context: "CholFactor::from_lower",
                expected: n * n,
                got: lower.len(),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if lower[i * n + j] != 0.0 {
                    return Err(Error::InvalidInput(
                        "factor has nonzero entries above the diagonal".into(),
                    ));
                }
            }
        }
        Ok(Self {
            n,
            lower,
            jitter_used,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.n + j]
    }

    /// Solve `L z = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "CholFactor::solve_lower",
                expected: self.n,
                got: b.len(),
            });
        }
        let mut z = vec![0.0; self.n];
        for i in 0..self.n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.get(i, j) * z[j];
            }
            z[i] = s / self.get(i, i);
        }
        Ok(z)
    }

    /// Solve `L^T x = z` by back substitution.
    pub fn solve_lower_transpose(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "CholFactor::solve_lower_transpose",
                expected: self.n,
                got: z.len(),
            });
        }
        let mut x = vec![0.0; self.n];
        for i in (0..self.n).rev() {
            let mut s = z[i];
            for j in (i + 1)..self.n {
                s -= self.get(j, i) * x[j];
            }
            x[i] = s / self.get(i, i);
        }
        Ok(x)
    }

    /// `L * z`.
    pub fn mul_lower(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "CholFactor::mul_lower",
                expected: self.n,
                got: z.len(),
            });
        }
        Ok((0..self.n)
            .map(|i| (0..=i).map(|j| self.get(i, j) * z[j]).sum())
            .collect())
    }
}

/// Factor `A + jI` for the smallest jitter `j` in the escalation schedule
/// that makes the factorization succeed.
pub fn cholesky_with_jitter(a: &SymMatrix) -> Result<CholFactor> {
    let n = a.n();
    let mean_diag = a.trace() / n as f64;
    let mut jitters = vec![0.0];
    if mean_diag > 0.0 {
        let mut j = JITTER_START_REL * mean_diag;
        let cap = JITTER_CAP_REL * mean_diag;
        while j <= cap * (1.0 + 1e-12) {
            jitters.push(j);
            j *= 10.0;
        }
    }
    for &jitter in &jitters {
        if let Some(lower) = try_cholesky(a, jitter) {
            return Ok(CholFactor {
                n,
                lower,
                jitter_used: jitter,
            });
        }
    }
    Err(Error::NotPositiveDefinite {
        jitter_cap: JITTER_CAP_REL * mean_diag.max(0.0),
    })
}

fn try_cholesky(a: &SymMatrix, jitter: f64) -> Option<Vec<f64>> {
    let n = a.n();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j) + if i == j { jitter } else { 0.0 };
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// `log |A + jI| = 2 * sum(log diag L)`.
pub fn logdet(f: &CholFactor) -> f64 {
    2.0 * (0..f.n()).map(|i| f.get(i, i).ln()).sum::<f64>()
}

/// Solve `(A + jI) x = b` from the factor.
pub fn solve_spd(f: &CholFactor, b: &[f64]) -> Result<Vec<f64>> {
    let z = f.solve_lower(b)?;
    f.solve_lower_transpose(&z)
}

/// Explicit `(A + jI)^{-1}`, one triangular solve pair per column.
pub fn inv_spd(f: &CholFactor) -> Result<SymMatrix> {
    let n = f.n();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve_spd(f, &e)?);
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = cols[j][i];
        }
    }
    SymMatrix::from_rows(n, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruction_error(a: &SymMatrix, f: &CholFactor) -> f64 {
        let n = a.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for k in 0..=i.min(j) {
                    v += f.get(i, k) * f.get(j, k);
                }
                let target = a.get(i, j) + if i == j { f.jitter_used() } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    #[test]
    fn identity_needs_no_jitter() {
        let a = SymMatrix::identity(3);
        let f = cholesky_with_jitter(&a).unwrap();
        assert_eq!(f.jitter_used(), 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(f.get(i, j), expect);
            }
        }
    }

    #[test]
    fn rank_one_all_ones_succeeds_with_small_jitter() {
        // eigenvalues {2, 0}: singular but PSD, so a tiny jitter must fix it
        let a = SymMatrix::from_rows(2, vec![1.0; 4]).unwrap();
        let f = cholesky_with_jitter(&a).unwrap();
        assert!(f.jitter_used() > 0.0);
        assert!(f.jitter_used() <= 1e-4 * a.trace() / 2.0);
        assert!(reconstruction_error(&a, &f) <= 1e-10 * a.trace() / 2.0);
    }

    #[test]
    fn negative_definite_fails() {
        let a = SymMatrix::diag(&[-1.0, -1.0]).unwrap();
        assert!(matches!(
            cholesky_with_jitter(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn logdet_examples() {
        let eye = cholesky_with_jitter(&SymMatrix::identity(4)).unwrap();
        assert_eq!(logdet(&eye), 0.0);

        let d = cholesky_with_jitter(&SymMatrix::diag(&[2.0, 2.0]).unwrap()).unwrap();
        assert!((logdet(&d) - 2.0 * 2.0_f64.ln()).abs() < 1e-12);

        // |[[1, .5], [.5, 1]]| = 0.75
        let a = SymMatrix::from_rows(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let f = cholesky_with_jitter(&a).unwrap();
        assert!((logdet(&f) - 0.75_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn solve_examples() {
        let eye = cholesky_with_jitter(&SymMatrix::identity(2)).unwrap();
        assert_eq!(solve_spd(&eye, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);

        let d = cholesky_with_jitter(&SymMatrix::diag(&[2.0, 4.0]).unwrap()).unwrap();
        let x = solve_spd(&d, &[2.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);

        // [[1, .5], [.5, 1]]^{-1} [1, 1] = [2/3, 2/3]
        let a = SymMatrix::from_rows(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let f = cholesky_with_jitter(&a).unwrap();
        let x = solve_spd(&f, &[1.0, 1.0]).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((x[1] - 2.0 / 3.0).abs() < 1e-12);

        assert!(solve_spd(&f, &[1.0]).is_err());
    }

    #[test]
    fn solve_residual_is_tiny_on_random_spd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(2..12);
            // A = B B^T + I is comfortably SPD
            let b: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = SymMatrix::from_fn(n, |i, j| {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in 0..n {
                    s += b[i * n + k] * b[j * n + k];
                }
                s
            })
            .unwrap();
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = cholesky_with_jitter(&a).unwrap();
            let x = solve_spd(&f, &rhs).unwrap();
            let back = a.matvec(&x).unwrap();
            let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let resid = back
                .iter()
                .zip(&rhs)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt();
            assert!(resid <= 1e-8 * rhs_norm.max(1.0), "residual {resid}");
        }
    }

    #[test]
    fn inverse_matches_hand_value() {
        let a = SymMatrix::from_rows(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let inv = inv_spd(&cholesky_with_jitter(&a).unwrap()).unwrap();
        assert!((inv.get(0, 0) - 4.0 / 3.0).abs() < 1e-12);
        assert!((inv.get(0, 1) + 2.0 / 3.0).abs() < 1e-12);
    }
}
