use super::matrix::SymMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;
const OFFDIAG_TOL_REL: f64 = 1e-12;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi, sorted descending.
///
/// Converged when the off-diagonal Frobenius norm falls below
/// `1e-12 * ||A||_F`. Robust and plenty fast for the dense desk-scale
/// matrices this crate works with.
pub fn sym_eigenvalues(a: &SymMatrix) -> Result<Vec<f64>> {
    let n = a.n();
    let mut m = a.data().to_vec();
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let tol = OFFDIAG_TOL_REL * norm;

    for _sweep in 0..MAX_SWEEPS {
        if offdiag_norm(&m, n) <= tol {
            let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
            eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
            return Ok(eig);
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, n, p, q);
            }
        }
    }
    Err(Error::NoConvergence { sweeps: MAX_SWEEPS })
}

fn offdiag_norm(m: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * m[i * n + j] * m[i * n + j];
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing m[p][q].
fn rotate(m: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = m[p * n + q];
    if apq == 0.0 {
        return;
    }
    let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let app = m[p * n + p];
    let aqq = m[q * n + q];
    m[p * n + p] = app - t * apq;
    m[q * n + q] = aqq + t * apq;
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[k * n + p];
        let akq = m[k * n + q];
        m[k * n + p] = c * akp - s * akq;
        m[p * n + k] = m[k * n + p];
        m[k * n + q] = c * akq + s * akp;
        m[q * n + k] = m[k * n + q];
    }
}
