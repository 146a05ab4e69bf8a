//! Synthetic data, spectrum diagnostics, and the two headline experiments:
//! the lengthscale sweep (complexity penalty versus total likelihood) and
//! the LML-versus-CLML deep-kernel comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{log_marginal_likelihood, posterior_predict, Dataset, MllBreakdown};
use crate::kernels::{kernel_matrix, Hyperparameters, KernelSpec, NoiseMode};
use crate::net::{net_init, NetSpec};
use crate::numerics::{
    cholesky_with_jitter, mvn_sample, rng_from_seed, sym_eigenvalues, Seed, SymMatrix,
};
use crate::objective::{ClmlConfig, Objective, ObjectiveKind};
use crate::optimize::{optimize, OptConfig};

/// Synthetic target families. Inputs are always uniform on [0, 10].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Function values drawn from an RBF prior with the given scales.
    GpSample { lengthscale: f64, signal_var: f64 },
    /// `y = sin(2 pi x / 4)`.
    Sine,
    /// `y = sign(x - 5)`.
    Step,
}

/// Deterministic dataset generator. Input positions, the latent function,
/// and observation noise each use an independent derived stream.
pub fn generate_synthetic(
    kind: &SyntheticKind,
    n: usize,
    noise_sd: f64,
    seed: Seed,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    if let SyntheticKind::GpSample { .. } = kind {
        if n < 2 {
            return Err(Error::InvalidInput(
                "gp_sample needs n >= 2 for a factorizable prior matrix".into(),
            ));
        }
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::InvalidInput("noise_sd must be >= 0".into()));
    }

    use rand::Rng;
    use rand_distr::Distribution;
    let mut rng_x = rng_from_seed(seed.derive(1));
    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng_x.gen_range(0.0..10.0)]).collect();

    let latent: Vec<f64> = match kind {
        SyntheticKind::GpSample {
            lengthscale,
            signal_var,
        } => {
            let h = Hyperparameters::rbf(
                lengthscale.ln(),
                signal_var.ln(),
                f64::NEG_INFINITY,
                NoiseMode::Absolute,
            );
            let k = kernel_matrix(&xs, &h, &KernelSpec::rbf())?;
            let f = cholesky_with_jitter(&k)?;
            mvn_sample(&vec![0.0; n], &f, seed.derive(2))?
        }
        SyntheticKind::Sine => xs
            .iter()
            .map(|x| (2.0 * std::f64::consts::PI * x[0] / 4.0).sin())
            .collect(),
        SyntheticKind::Step => xs.iter().map(|x| (x[0] - 5.0).signum()).collect(),
    };

    let mut rng_noise = rng_from_seed(seed.derive(3));
    let ys: Vec<f64> = latent
        .iter()
        .map(|f| {
            let eps: f64 = rand_distr::StandardNormal.sample(&mut rng_noise);
            f + noise_sd * eps
        })
        .collect();
    Dataset::new(xs, ys)
}

/// One sampled problem for the identity-verification suite.
#[derive(Debug, Clone)]
pub struct VerifyInstance {
    pub dataset: Dataset,
    /// Hat convention: unit amplitude, `log_noise = log sn2_hat`, ratio mode.
    pub h_hat: Hyperparameters,
    pub spec: KernelSpec,
}

/// Generic seeded instance: N in [2, 50], inputs uniform on [0, 10]^D with
/// D in {1, 2}, standard-normal targets, lengthscale in [0.3, 3], noise
/// ratio in [1e-3, 1] so the hat gram matrix stays well conditioned.
pub fn random_verify_instance(seed: Seed, deep: bool) -> VerifyInstance {
    use rand::Rng;
    use rand_distr::Distribution;
    let mut rng = rng_from_seed(seed);
    let n = rng.gen_range(2..=50);
    let d = rng.gen_range(1..=2usize);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(0.0..10.0)).collect())
        .collect();
    let ys: Vec<f64> = (0..n)
        .map(|_| rand_distr::StandardNormal.sample(&mut rng))
        .collect();
    let dataset = Dataset::new(xs, ys).expect("sampled dataset is valid");

    let log_lengthscale = rng.gen_range(0.3f64.ln()..3.0f64.ln());
    let log_noise = rng.gen_range(1e-3f64.ln()..1.0f64.ln());
    let mut h_hat = Hyperparameters::rbf(log_lengthscale, 0.0, log_noise, NoiseMode::Ratio);
    let spec = if deep {
        let ns = NetSpec::tanh_mlp(vec![d, 4, 2]).expect("valid net spec");
        h_hat.net = Some(net_init(&ns, seed.derive(0xdeef)));
        KernelSpec::deep_rbf()
    } else {
        KernelSpec::rbf()
    };
    VerifyInstance {
        dataset,
        h_hat,
        spec,
    }
}

/// Eigenvalue-based summaries of a covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDiagnostics {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Sum of log eigenvalues; `-inf` when the matrix is singular.
    pub logdet: f64,
    /// `exp(entropy)` of the normalized spectrum, in [1, N].
    pub effective_rank: f64,
    /// Mean |off-diagonal| of the correlation matrix, in [0, 1].
    pub mean_abs_offdiag_corr: f64,
}

pub fn spectrum_diagnostics(k: &SymMatrix) -> Result<SpectrumDiagnostics> {
    let n = k.n();
    let eigenvalues = sym_eigenvalues(k)?;
    let lambda_max = eigenvalues[0];
    if lambda_max <= 0.0 {
        return Err(Error::InvalidInput(
            "spectrum diagnostics need a nonzero PSD matrix".into(),
        ));
    }

    let logdet = if eigenvalues.iter().any(|&l| l <= 0.0) {
        f64::NEG_INFINITY
    } else {
        eigenvalues.iter().map(|l| l.ln()).sum()
    };

    // entropy over the floored, normalized spectrum
    let floor = 1e-12 * lambda_max;
    let floored: Vec<f64> = eigenvalues.iter().map(|&l| l.max(floor)).collect();
    let total: f64 = floored.iter().sum();
    let entropy: f64 = floored
        .iter()
        .map(|l| {
            let p = l / total;
            -p * p.ln()
        })
        .sum();
    let effective_rank = entropy.exp().clamp(1.0, n as f64);

    let mut corr_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        if k.get(i, i) <= 0.0 {
            return Err(Error::InvalidInput(
                "correlation needs strictly positive diagonal".into(),
            ));
        }
        for j in (i + 1)..n {
            let c = k.get(i, j) / (k.get(i, i) * k.get(j, j)).sqrt();
            corr_sum += c.abs();
            pairs += 1;
        }
    }
    let mean_abs_offdiag_corr = if pairs == 0 { 0.0 } else { corr_sum / pairs as f64 };

    Ok(SpectrumDiagnostics {
        eigenvalues,
        logdet,
        effective_rank,
        mean_abs_offdiag_corr,
    })
}

/// One grid point of the lengthscale sweep, all terms evaluated on
/// `K + sn2 I` at that lengthscale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lengthscale: f64,
    pub data_fit: f64,
    pub complexity: f64,
    pub total: f64,
    pub logdet: f64,
    pub effective_rank: f64,
    pub mean_abs_offdiag_corr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Row with the highest total; ties break to the lowest index.
    pub argmax_row: usize,
}

/// Evaluate the marginal-likelihood breakdown along a lengthscale grid with
/// everything else pinned from `h_base`.
pub fn run_lengthscale_sweep(
    d: &Dataset,
    grid: &[f64],
    h_base: &Hyperparameters,
    spec: &KernelSpec,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("sweep grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(
            "sweep grid must be strictly increasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &l in grid {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidInput(format!("bad grid lengthscale {l}")));
        }
        let mut h = h_base.clone();
        h.log_lengthscale = l.ln();
        let b = log_marginal_likelihood(d, &h, spec)?;
        let k = kernel_matrix(d.inputs(), &h, spec)?.add_diag(h.noise_var());
        let diag = spectrum_diagnostics(&k)?;
        rows.push(SweepRow {
            lengthscale: l,
            data_fit: b.data_fit,
            complexity: b.complexity,
            total: b.total,
            logdet: -2.0 * b.complexity,
            effective_rank: diag.effective_rank,
            mean_abs_offdiag_corr: diag.mean_abs_offdiag_corr,
        });
    }
    let mut argmax_row = 0;
    for (i, row) in rows.iter().enumerate() {
        if row.total > rows[argmax_row].total {
            argmax_row = i;
        }
    }
    Ok(SweepReport { rows, argmax_row })
}

/// Log-spaced grid of `count` points from `lo` to `hi` inclusive.
pub fn log_spaced_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi > lo) || count < 2 {
        return Err(Error::InvalidInput(
            "log grid needs 0 < lo < hi and count >= 2".into(),
        ));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

/// Configuration of the LML-versus-CLML deep-kernel comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub data: SyntheticKind,
    pub n: usize,
    pub noise_sd: f64,
    /// Feature-net layer widths, input dimension first.
    pub net_widths: Vec<usize>,
    pub clml_m_fraction: f64,
    pub clml_permutations: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub weight_decay: f64,
    pub seeds: Vec<u64>,
}

impl ComparisonConfig {
    pub fn small_n_default(seeds: Vec<u64>) -> Self {
        Self {
            data: SyntheticKind::GpSample {
                lengthscale: 1.0,
                signal_var: 1.0,
            },
            n: 30,
            noise_sd: 0.1,
            net_widths: vec![1, 16, 16, 2],
            clml_m_fraction: 0.8,
            clml_permutations: 10,
            max_iters: 60,
            grad_tol: 1e-5,
            weight_decay: 0.0,
            seeds,
        }
    }
}

/// Final state and test metrics of one training arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub objective: ObjectiveKind,
    pub final_log_lengthscale: f64,
    pub final_log_signal_var: f64,
    pub final_log_noise: f64,
    pub train_breakdown: MllBreakdown,
    pub test_rmse: f64,
    pub test_mean_nlpd: f64,
    /// Overcorrelation of the learned train kernel matrix.
    pub train_mean_abs_offdiag_corr: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRun {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lml: Option<ArmMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clml: Option<ArmMetrics>,
    /// Populated instead of the arms when the run failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: ComparisonConfig,
    pub runs: Vec<ComparisonRun>,
}

/// Train one deep kernel per objective from identical initialization and
/// report per-arm metrics. Per-seed failures are recorded, not fatal.
pub fn run_dkl_comparison(config: &ComparisonConfig) -> Result<ComparisonReport> {
    if !(config.clml_m_fraction >= 0.0 && config.clml_m_fraction <= 1.0) {
        return Err(Error::InvalidInput("clml_m_fraction must be in [0, 1]".into()));
    }
    if config.net_widths.len() < 2 {
        return Err(Error::InvalidInput("net_widths needs >= 2 layers".into()));
    }
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed_value in &config.seeds {
        match run_one_comparison(config, Seed(seed_value)) {
            Ok((lml, clml)) => runs.push(ComparisonRun {
                seed: seed_value,
                lml: Some(lml),
                clml: Some(clml),
                error: None,
            }),
            Err(e) => runs.push(ComparisonRun {
                seed: seed_value,
                lml: None,
                clml: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(ComparisonReport {
        config: config.clone(),
        runs,
    })
}

fn run_one_comparison(config: &ComparisonConfig, seed: Seed) -> Result<(ArmMetrics, ArmMetrics)> {
    let full = generate_synthetic(&config.data, config.n, config.noise_sd, seed)?;

    // deterministic 80/20 split
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..full.n()).collect();
    let mut rng = rng_from_seed(seed.derive(10));
    idx.shuffle(&mut rng);
    let n_train = ((full.n() as f64) * 0.8).round() as usize;
    let n_train = n_train.clamp(1, full.n() - 1);
    let mut train_idx = idx[..n_train].to_vec();
    let mut test_idx = idx[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let train = full.subset(&train_idx)?;
    let test = full.subset(&test_idx)?;

    let spec = KernelSpec::deep_rbf();
    let net_spec = NetSpec::tanh_mlp(config.net_widths.clone())?;
    let mut init = Objective::lml(train.clone(), spec).default_init(seed.derive(11));
    init.net = Some(net_init(&net_spec, seed.derive(11)));

    let opt_cfg = OptConfig {
        max_iters: config.max_iters,
        grad_tol: config.grad_tol,
        seed,
    };

    let mut lml_obj = Objective::lml(train.clone(), spec);
    lml_obj.weight_decay = config.weight_decay;
    let lml_arm = train_arm(&lml_obj, &init, &opt_cfg, &train, &test)?;

    let clml_cfg = ClmlConfig {
        m: ((config.clml_m_fraction * train.n() as f64).ceil() as usize).min(train.n()),
        permutations: config.clml_permutations,
        seed: seed.derive(12),
    };
    let mut clml_obj = Objective::clml(train.clone(), spec, clml_cfg)?;
    clml_obj.weight_decay = config.weight_decay;
    let clml_arm = train_arm(&clml_obj, &init, &opt_cfg, &train, &test)?;

    Ok((lml_arm, clml_arm))
}

fn train_arm(
    obj: &Objective,
    init: &Hyperparameters,
    opt_cfg: &OptConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<ArmMetrics> {
    let trace = optimize(obj, init, opt_cfg)?;
    let h = &trace.final_hyperparameters;

    let train_breakdown = log_marginal_likelihood(train, h, &obj.kernel)?;
    let posterior = posterior_predict(train, h, &obj.kernel, test.inputs())?;

    let mut se = 0.0;
    let mut nlpd = 0.0;
    for i in 0..test.n() {
        let err = posterior.mean[i] - test.targets()[i];
        se += err * err;
        let var = posterior.variance[i].max(1e-12);
        nlpd += 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + err * err / var);
    }
    let test_rmse = (se / test.n() as f64).sqrt();
    let test_mean_nlpd = nlpd / test.n() as f64;

    let k_train = kernel_matrix(train.inputs(), h, &obj.kernel)?.add_diag(h.noise_var());
    let diag = spectrum_diagnostics(&k_train)?;

    let metrics = ArmMetrics {
        objective: obj.kind,
        final_log_lengthscale: h.log_lengthscale,
        final_log_signal_var: h.log_signal_var,
        final_log_noise: h.log_noise,
        train_breakdown,
        test_rmse,
        test_mean_nlpd,
        train_mean_abs_offdiag_corr: diag.mean_abs_offdiag_corr,
        iterations: trace.iterations.len(),
        converged: trace.converged,
    };
    for (name, v) in [
        ("test_rmse", metrics.test_rmse),
        ("test_mean_nlpd", metrics.test_mean_nlpd),
        ("train_total", metrics.train_breakdown.total),
        ("train_corr", metrics.train_mean_abs_offdiag_corr),
    ] {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite metric {name}")));
        }
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_without_noise_is_exact() {
        let d = generate_synthetic(&SyntheticKind::Sine, 20, 0.0, Seed(5)).unwrap();
        for (x, y) in d.inputs().iter().zip(d.targets()) {
            assert_eq!(*y, (2.0 * std::f64::consts::PI * x[0] / 4.0).sin());
        }
    }

    #[test]
    fn step_midpoint_sign() {
        let d = generate_synthetic(&SyntheticKind::Step, 50, 0.0, Seed(6)).unwrap();
        for (x, y) in d.inputs().iter().zip(d.targets()) {
            assert_eq!(*y, if x[0] > 5.0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let kind = SyntheticKind::GpSample {
            lengthscale: 1.0,
            signal_var: 1.0,
        };
        let a = generate_synthetic(&kind, 15, 0.1, Seed(7)).unwrap();
        let b = generate_synthetic(&kind, 15, 0.1, Seed(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&kind, 15, 0.1, Seed(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gp_sample_needs_two_points() {
        let kind = SyntheticKind::GpSample {
            lengthscale: 1.0,
            signal_var: 1.0,
        };
        assert!(generate_synthetic(&kind, 1, 0.0, Seed(0)).is_err());
        assert!(generate_synthetic(&kind, 2, 0.0, Seed(0)).is_ok());
    }

    #[test]
    fn gp_sample_marginal_variance_matches() {
        // Monte-Carlo oracle across 200 seeds
        let kind = SyntheticKind::GpSample {
            lengthscale: 1.0,
            signal_var: 1.0,
        };
        let noise_sd = 0.5;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for s in 0..200u64 {
            let d = generate_synthetic(&kind, 10, noise_sd, Seed(1000 + s)).unwrap();
            for y in d.targets() {
                sum_sq += y * y;
                count += 1;
            }
        }
        let var = sum_sq / count as f64;
        let expected = 1.0 + noise_sd * noise_sd;
        assert!(
            (var - expected).abs() < 0.15 * expected,
            "marginal variance {var} vs {expected}"
        );
    }

    #[test]
    fn spectrum_identity() {
        let d = spectrum_diagnostics(&SymMatrix::identity(4)).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0; 4]);
        assert_eq!(d.logdet, 0.0);
        assert!((d.effective_rank - 4.0).abs() < 1e-9);
        assert_eq!(d.mean_abs_offdiag_corr, 0.0);
    }

    #[test]
    fn spectrum_all_ones_is_perfectly_correlated() {
        let k = SymMatrix::from_rows(2, vec![1.0; 4]).unwrap();
        let d = spectrum_diagnostics(&k).unwrap();
        assert!((d.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!(d.eigenvalues[1].abs() < 1e-12);
        assert_eq!(d.mean_abs_offdiag_corr, 1.0);
        assert!(d.effective_rank < 1.0 + 1e-9);
        assert_eq!(d.logdet, f64::NEG_INFINITY);
    }

    #[test]
    fn spectrum_two_by_two_hand_values() {
        let k = SymMatrix::from_rows(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let d = spectrum_diagnostics(&k).unwrap();
        assert!((d.eigenvalues[0] - 1.5).abs() < 1e-12);
        assert!((d.eigenvalues[1] - 0.5).abs() < 1e-12);
        assert!((d.logdet - 0.75f64.ln()).abs() < 1e-9);
        assert!((d.effective_rank - 1.754765).abs() < 1e-6);
        assert!((d.mean_abs_offdiag_corr - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectrum_logdet_matches_cholesky_route() {
        use rand::Rng;
        let mut rng = rng_from_seed(Seed(140));
        for _ in 0..20 {
            let n = rng.gen_range(2..15);
            let b: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let k = SymMatrix::from_fn(n, |i, j| {
                let mut s = if i == j { 0.3 } else { 0.0 };
                for t in 0..n {
                    s += b[i * n + t] * b[j * n + t];
                }
                s
            })
            .unwrap();
            let d = spectrum_diagnostics(&k).unwrap();
            let chol = crate::numerics::logdet(&cholesky_with_jitter(&k).unwrap());
            assert!(
                (d.logdet - chol).abs() <= 1e-6 * chol.abs().max(1.0),
                "{} vs {}",
                d.logdet,
                chol
            );
        }
    }

    #[test]
    fn sweep_single_point_grid() {
        let d = generate_synthetic(&SyntheticKind::Sine, 10, 0.05, Seed(9)).unwrap();
        let h = Hyperparameters::rbf(0.0, 0.0, (1e-2f64).ln(), NoiseMode::Absolute);
        let rep = run_lengthscale_sweep(&d, &[1.0], &h, &KernelSpec::rbf()).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.argmax_row, 0);
    }

    #[test]
    fn sweep_rejects_unsorted_grid() {
        let d = generate_synthetic(&SyntheticKind::Sine, 5, 0.0, Seed(9)).unwrap();
        let h = Hyperparameters::rbf(0.0, 0.0, -2.0, NoiseMode::Absolute);
        assert!(run_lengthscale_sweep(&d, &[1.0, 0.5], &h, &KernelSpec::rbf()).is_err());
        assert!(run_lengthscale_sweep(&d, &[], &h, &KernelSpec::rbf()).is_err());
    }

    #[test]
    fn sweep_on_gp_data_penalty_prefers_large_but_total_does_not() {
        let kind = SyntheticKind::GpSample {
            lengthscale: 1.0,
            signal_var: 1.0,
        };
        let d = generate_synthetic(&kind, 40, 0.1, Seed(11)).unwrap();
        let h = Hyperparameters::rbf(0.0, 0.0, (1e-2f64).ln(), NoiseMode::Absolute);
        let grid = log_spaced_grid(0.1, 1000.0, 25).unwrap();
        let rep = run_lengthscale_sweep(&d, &grid, &h, &KernelSpec::rbf()).unwrap();

        let big = 100.0 * d.max_pairwise_distance();
        let two = run_lengthscale_sweep(&d, &[1.0, big], &h, &KernelSpec::rbf()).unwrap();
        assert!(
            two.rows[1].complexity > two.rows[0].complexity,
            "complexity penalty must improve at the huge lengthscale"
        );

        let argmax_l = rep.rows[rep.argmax_row].lengthscale;
        assert!(argmax_l <= 10.0, "total argmax at {argmax_l}");

        for w in rep.rows.windows(2) {
            assert!(
                w[1].mean_abs_offdiag_corr >= w[0].mean_abs_offdiag_corr - 1e-12,
                "overcorrelation must not decrease along the grid"
            );
        }
    }

    #[test]
    fn comparison_zero_budget_arms_are_identical() {
        let mut cfg = ComparisonConfig::small_n_default(vec![3]);
        cfg.n = 16;
        cfg.net_widths = vec![1, 4, 2];
        cfg.max_iters = 0;
        let rep = run_dkl_comparison(&cfg).unwrap();
        assert_eq!(rep.runs.len(), 1);
        let run = &rep.runs[0];
        assert!(run.error.is_none(), "{:?}", run.error);
        let (lml, clml) = (run.lml.as_ref().unwrap(), run.clml.as_ref().unwrap());
        assert_eq!(lml.final_log_lengthscale, clml.final_log_lengthscale);
        assert_eq!(lml.test_rmse, clml.test_rmse);
        assert_eq!(lml.train_breakdown, clml.train_breakdown);
    }

    #[test]
    fn comparison_is_deterministic() {
        let mut cfg = ComparisonConfig::small_n_default(vec![4, 5]);
        cfg.n = 16;
        cfg.net_widths = vec![1, 4, 2];
        cfg.max_iters = 5;
        let a = run_dkl_comparison(&cfg).unwrap();
        let b = run_dkl_comparison(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comparison_produces_finite_metrics() {
        let mut cfg = ComparisonConfig::small_n_default(vec![1, 2]);
        cfg.n = 20;
        cfg.net_widths = vec![1, 6, 2];
        cfg.max_iters = 15;
        let rep = run_dkl_comparison(&cfg).unwrap();
        for run in &rep.runs {
            assert!(run.error.is_none(), "seed {}: {:?}", run.seed, run.error);
            for arm in [run.lml.as_ref().unwrap(), run.clml.as_ref().unwrap()] {
                assert!(arm.test_rmse.is_finite());
                assert!(arm.test_mean_nlpd.is_finite());
                assert!((0.0..=1.0).contains(&arm.train_mean_abs_offdiag_corr));
            }
        }
    }
}
