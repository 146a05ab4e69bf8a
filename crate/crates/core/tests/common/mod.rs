//! Shared oracles and generators for the integration suites.
//!
//! Everything here is deliberately independent of the library's own
//! computation paths: the conditional density is evaluated directly from
//! blocks of the kernel matrix, and 1-D maxima are located by golden-section
//! search rather than any closed form.

use gplab::gp::{Dataset, LOG_2PI};
use gplab::kernels::{kernel_matrix, Hyperparameters, KernelSpec, NoiseMode};
use gplab::numerics::{cholesky_with_jitter, logdet, mvn_sample, rng_from_seed, solve_spd, Seed, SymMatrix};

/// GP-sampled dataset: inputs uniform on [0, 10], targets from an RBF prior
/// plus observation noise.
pub fn gp_dataset(n: usize, lengthscale: f64, signal_var: f64, noise_sd: f64, seed: Seed) -> Dataset {
    use rand::Rng;
    use rand_distr::Distribution;
    let mut rng = rng_from_seed(seed.derive(1));
    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..10.0)]).collect();
    let h = Hyperparameters::rbf(
        lengthscale.ln(),
        signal_var.ln(),
        f64::NEG_INFINITY,
        NoiseMode::Absolute,
    );
    let k = kernel_matrix(&xs, &h, &KernelSpec::rbf()).unwrap();
    let f = cholesky_with_jitter(&k).unwrap();
    let latent = mvn_sample(&vec![0.0; n], &f, seed.derive(2)).unwrap();
    let mut rng_noise = rng_from_seed(seed.derive(3));
    let ys: Vec<f64> = latent
        .iter()
        .map(|v| {
            let eps: f64 = rand_distr::StandardNormal.sample(&mut rng_noise);
            v + noise_sd * eps
        })
        .collect();
    Dataset::new(xs, ys).unwrap()
}

/// Direct conditional Gaussian evaluation `log p(y_rest | y_subset)` from
/// blocks of the full kernel matrix. Oracle route for the CLML chain
/// identity.
pub fn conditional_log_density(
    d: &Dataset,
    h: &Hyperparameters,
    spec: &KernelSpec,
    subset: &[usize],
) -> f64 {
    let n = d.n();
    let rest: Vec<usize> = (0..n).filter(|i| !subset.contains(i)).collect();
    let k = kernel_matrix(d.inputs(), h, spec).unwrap();
    let noise = h.noise_var();

    let a = SymMatrix::from_fn(subset.len(), |i, j| {
        k.get(subset[i], subset[j]) + if i == j { noise } else { 0.0 }
    })
    .unwrap();
    let fa = cholesky_with_jitter(&a).unwrap();
    let ya: Vec<f64> = subset.iter().map(|&i| d.targets()[i]).collect();
    let alpha = solve_spd(&fa, &ya).unwrap();

    let cross: Vec<Vec<f64>> = rest
        .iter()
        .map(|&r| subset.iter().map(|&s| k.get(r, s)).collect())
        .collect();
    let mean: Vec<f64> = cross
        .iter()
        .map(|row| row.iter().zip(&alpha).map(|(a, b)| a * b).sum())
        .collect();
    let solved: Vec<Vec<f64>> = cross
        .iter()
        .map(|row| solve_spd(&fa, row).unwrap())
        .collect();
    let c = SymMatrix::from_fn(rest.len(), |i, j| {
        let base = k.get(rest[i], rest[j]) + if i == j { noise } else { 0.0 };
        let reduction: f64 = cross[i].iter().zip(&solved[j]).map(|(a, b)| a * b).sum();
        base - reduction
    })
    .unwrap();
    let fc = cholesky_with_jitter(&c).unwrap();
    let resid: Vec<f64> = rest
        .iter()
        .zip(&mean)
        .map(|(&r, m)| d.targets()[r] - m)
        .collect();
    let z = fc.solve_lower(&resid).unwrap();
    let quad: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * quad - 0.5 * logdet(&fc) - 0.5 * rest.len() as f64 * LOG_2PI
}

/// Golden-section maximum of a unimodal function on [lo, hi].
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, iters: usize) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
