//! Acceptance suite. One test per criterion; each prints a PASS line with
//! the measured worst-case numbers (run with `--nocapture` to see them).

mod common;

use common::{conditional_log_density, golden_section_max, gp_dataset};

use gplab::gp::{log_marginal_likelihood, lml_gradient, Dataset};
use gplab::kernels::{kernel_matrix, Hyperparameters, KernelSpec, NoiseMode};
use gplab::lab::{
    random_verify_instance, run_dkl_comparison, run_lengthscale_sweep, ComparisonConfig,
};
use gplab::numerics::{cholesky_with_jitter, logdet, rng_from_seed, sym_eigenvalues, Seed, SymMatrix};
use gplab::objective::{gradient_check, ClmlConfig, Objective, ObjectiveKind};
use gplab::optimize::{optimize, OptConfig};
use gplab::profiled::{
    induced_hyperparameters, logdet_split, profiled_objective, sensitivity_of_profiled_amplitude,
    verify_stationarity,
};
use gplab::report::to_checked_value;

fn fifty_instances() -> Vec<gplab::lab::VerifyInstance> {
    (0..50)
        .map(|i| random_verify_instance(Seed(9000).derive(i), i % 2 == 1))
        .collect()
}

#[test]
fn acceptance_01_profiled_equals_full_lml_and_data_fit_collapses() {
    let mut worst_equiv: f64 = 0.0;
    let mut worst_collapse: f64 = 0.0;
    for (i, inst) in fifty_instances().iter().enumerate() {
        let pr = profiled_objective(&inst.dataset, &inst.h_hat, &inst.spec).unwrap();
        let rel = pr.equivalence_residual / pr.profiled_total.abs().max(1.0);
        assert!(
            rel <= 1e-8,
            "instance {i}: equivalence residual {rel:e} exceeds 1e-8"
        );
        worst_equiv = worst_equiv.max(rel);

        let induced = induced_hyperparameters(&inst.h_hat, pr.sigma_f_hat_sq);
        let full = log_marginal_likelihood(&inst.dataset, &induced, &inst.spec).unwrap();
        let collapse = (full.data_fit + 0.5 * inst.dataset.n() as f64).abs();
        assert!(
            collapse <= 1e-8,
            "instance {i}: induced data fit {} is not -N/2",
            full.data_fit
        );
        worst_collapse = worst_collapse.max(collapse);
    }
    println!(
        "ACCEPTANCE 1: PASS - profiled objective equals full LML on 50 instances \
         (worst residual {worst_equiv:.2e}, worst data-fit collapse {worst_collapse:.2e})"
    );
}

#[test]
fn acceptance_02_logdet_split_identity() {
    let mut worst: f64 = 0.0;
    for (i, inst) in fifty_instances().iter().enumerate() {
        let pr = profiled_objective(&inst.dataset, &inst.h_hat, &inst.spec).unwrap();
        let induced = induced_hyperparameters(&inst.h_hat, pr.sigma_f_hat_sq);
        let (lhs, rhs) = logdet_split(&inst.dataset, &induced, &inst.spec).unwrap();
        let gap = (lhs - rhs).abs() / lhs.abs().max(1.0);
        assert!(gap <= 1e-8, "instance {i}: split gap {gap:e}");
        worst = worst.max(gap);
    }
    println!("ACCEPTANCE 2: PASS - log-determinant split holds on 50 instances (worst gap {worst:.2e})");
}

#[test]
fn acceptance_03_stationarity_and_maximality() {
    let mut worst: f64 = 0.0;
    for (i, inst) in fifty_instances().iter().enumerate() {
        let rep = verify_stationarity(&inst.dataset, &inst.h_hat, &inst.spec).unwrap();
        assert!(
            rep.gradient_at_max.abs() <= 1e-8,
            "instance {i}: amplitude gradient {} at the maximizer",
            rep.gradient_at_max
        );
        assert!(
            rep.lml_at_max > rep.lml_below && rep.lml_at_max > rep.lml_above,
            "instance {i}: likelihood must strictly decrease at 0.9x and 1.1x"
        );
        worst = worst.max(rep.gradient_at_max.abs());
    }
    println!(
        "ACCEPTANCE 3: PASS - amplitude stationarity and local maximality on 50 instances \
         (worst gradient {worst:.2e})"
    );
}

#[test]
fn acceptance_04_reintroduced_data_fit_matters() {
    // part 1: the re-introduced term varies with the lengthscale. Generic
    // operating point: lengthscale at the median pairwise distance, so the
    // base kernel carries real correlation structure.
    for i in 0..10u64 {
        let inst = random_verify_instance(Seed(9100).derive(i), false);
        let mut h_hat = inst.h_hat.clone();
        h_hat.log_lengthscale = inst.dataset.median_pairwise_distance().ln();
        let sens = sensitivity_of_profiled_amplitude(&inst.dataset, &h_hat, &inst.spec).unwrap();
        let refit_grad = 0.5 * inst.dataset.n() as f64 * sens.d_log_lengthscale;
        assert!(
            refit_grad.abs() > 1e-12,
            "instance {i}: re-introduced data-fit gradient is zero"
        );
    }

    // part 2: grid argmax equivalence between the profiled objective and the
    // full LML maximized over the amplitude by an independent 1-D search
    for i in 0..10u64 {
        let inst = random_verify_instance(Seed(9200).derive(i), false);
        let med = inst.dataset.median_pairwise_distance();
        let grid = gplab::lab::log_spaced_grid(0.1 * med, 100.0 * med, 25).unwrap();

        let mut profiled_vals = Vec::with_capacity(25);
        let mut oracle_vals = Vec::with_capacity(25);
        for &l in &grid {
            let mut h_hat = inst.h_hat.clone();
            h_hat.log_lengthscale = l.ln();
            profiled_vals.push(
                profiled_objective(&inst.dataset, &h_hat, &inst.spec)
                    .unwrap()
                    .profiled_total,
            );

            let best_log_sf2 = golden_section_max(
                |s| {
                    let mut h = h_hat.clone();
                    h.log_signal_var = s;
                    h.noise_mode = NoiseMode::Ratio;
                    log_marginal_likelihood(&inst.dataset, &h, &inst.spec)
                        .unwrap()
                        .total
                },
                -30.0,
                30.0,
                150,
            );
            let mut h = h_hat.clone();
            h.log_signal_var = best_log_sf2;
            h.noise_mode = NoiseMode::Ratio;
            oracle_vals.push(
                log_marginal_likelihood(&inst.dataset, &h, &inst.spec)
                    .unwrap()
                    .total,
            );
        }

        let argmax = |vals: &[f64]| {
            let mut best = 0;
            for (j, v) in vals.iter().enumerate() {
                if *v > vals[best] {
                    best = j;
                }
            }
            best
        };
        let a = argmax(&profiled_vals);
        let b = argmax(&oracle_vals);
        assert_eq!(
            a, b,
            "instance {i}: profiled grid argmax {a} differs from full-LML argmax {b}"
        );
    }
    println!(
        "ACCEPTANCE 4: PASS - re-introduced data-fit gradient is nonzero and grid argmaxes \
         agree on 10 instances (25-point grid)"
    );
}

#[test]
fn acceptance_05_logdet_matches_eigenvalue_sum() {
    let mut matrices: Vec<SymMatrix> = vec![SymMatrix::identity(7)];
    matrices.push(SymMatrix::diag(&[0.5, 2.0, 7.0]).unwrap());

    let mut rng = rng_from_seed(Seed(9300));
    use rand::Rng;
    for _ in 0..10 {
        let n = rng.gen_range(2..20);
        let b: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        matrices.push(
            SymMatrix::from_fn(n, |i, j| {
                let mut s = if i == j { 0.3 } else { 0.0 };
                for t in 0..n {
                    s += b[i * n + t] * b[j * n + t];
                }
                s
            })
            .unwrap(),
        );
    }
    for i in 0..25u64 {
        let inst = random_verify_instance(Seed(9301).derive(i), i % 2 == 1);
        let mut h = inst.h_hat.clone();
        h.log_signal_var = 0.4;
        let k = kernel_matrix(inst.dataset.inputs(), &h, &inst.spec).unwrap();
        matrices.push(k.add_diag(h.noise_var()));
    }

    let mut worst: f64 = 0.0;
    for (i, m) in matrices.iter().enumerate() {
        let chol_route = logdet(&cholesky_with_jitter(m).unwrap());
        let eig_route: f64 = sym_eigenvalues(m).unwrap().iter().map(|l| l.ln()).sum();
        let gap = (chol_route - eig_route).abs() / chol_route.abs().max(1.0);
        assert!(gap <= 1e-6, "matrix {i}: logdet routes differ by {gap:e}");
        worst = worst.max(gap);
    }
    println!(
        "ACCEPTANCE 5: PASS - Cholesky logdet equals eigenvalue sum on {} PD matrices \
         (worst gap {worst:.2e})",
        matrices.len()
    );
}

#[test]
fn acceptance_06_learned_lengthscales_stay_moderate() {
    let spec = KernelSpec::rbf();
    let mut in_range = 0;
    let mut lengthscales = Vec::new();
    for seed in 0..10u64 {
        let d = gp_dataset(100, 1.0, 1.0, 0.1, Seed(9400).derive(seed));

        // the complexity penalty alone prefers the huge lengthscale
        let h_pin = Hyperparameters::rbf(0.0, 0.0, (0.01f64).ln(), NoiseMode::Absolute);
        let big = 100.0 * d.max_pairwise_distance();
        let sweep = run_lengthscale_sweep(&d, &[1.0, big], &h_pin, &spec).unwrap();
        assert!(
            sweep.rows[1].complexity > sweep.rows[0].complexity,
            "seed {seed}: complexity penalty must improve at 100x max distance"
        );

        let obj = Objective::lml(d, spec);
        let theta0 = obj.default_init(Seed(0));
        let trace = optimize(
            &obj,
            &theta0,
            &OptConfig {
                max_iters: 300,
                grad_tol: 1e-5,
                seed: Seed(seed),
            },
        )
        .unwrap();
        let l = trace.final_hyperparameters.lengthscale();
        lengthscales.push(l);
        if (0.5..=2.0).contains(&l) {
            in_range += 1;
        }
    }
    assert!(
        in_range >= 9,
        "only {in_range}/10 runs recovered a moderate lengthscale: {lengthscales:?}"
    );
    println!(
        "ACCEPTANCE 6: PASS - optimized lengthscale in [0.5, 2.0] in {in_range}/10 runs \
         while the penalty alone prefers the huge lengthscale"
    );
}

fn check_gradients(kind: ObjectiveKind, seed_base: u64) -> (f64, f64) {
    let mut worst_scalar: f64 = 0.0;
    let mut worst_net: f64 = 0.0;
    for i in 0..20u64 {
        let inst = random_verify_instance(Seed(seed_base).derive(i), i % 2 == 1);
        let obj = match kind {
            ObjectiveKind::Lml => Objective::lml(inst.dataset.clone(), inst.spec),
            ObjectiveKind::ProfiledLml => Objective::profiled(inst.dataset.clone(), inst.spec),
            ObjectiveKind::Clml => Objective::clml(
                inst.dataset.clone(),
                inst.spec,
                ClmlConfig::defaults(inst.dataset.n(), Seed(seed_base + 1).derive(i)),
            )
            .unwrap(),
        };
        let mut h = inst.h_hat.clone();
        if kind != ObjectiveKind::ProfiledLml {
            h.log_signal_var = 0.2;
        }
        // CLML sums many LML terms, so finite differences need a larger step
        // to stay above cancellation noise
        let step = if kind == ObjectiveKind::Clml { 1e-4 } else { 1e-6 };
        let check = gradient_check(&obj, &h, step).unwrap();
        for (name, err) in &check.per_coord {
            if name.starts_with("net[") {
                assert!(
                    *err <= 1e-3,
                    "{kind:?} instance {i} coordinate {name}: error {err:e}"
                );
                worst_net = worst_net.max(*err);
            } else {
                assert!(
                    *err <= 1e-5,
                    "{kind:?} instance {i} coordinate {name}: error {err:e}"
                );
                worst_scalar = worst_scalar.max(*err);
            }
        }
    }
    (worst_scalar, worst_net)
}

#[test]
fn acceptance_07_gradients_match_finite_differences() {
    let (lml_s, lml_n) = check_gradients(ObjectiveKind::Lml, 9500);
    let (prof_s, prof_n) = check_gradients(ObjectiveKind::ProfiledLml, 9600);
    let (clml_s, clml_n) = check_gradients(ObjectiveKind::Clml, 9700);
    println!(
        "ACCEPTANCE 7: PASS - gradient checks on 20 instances per objective \
         (worst scalar/net error: lml {lml_s:.2e}/{lml_n:.2e}, profiled {prof_s:.2e}/{prof_n:.2e}, \
         clml {clml_s:.2e}/{clml_n:.2e})"
    );
}

#[test]
fn acceptance_08_clml_chain_identity() {
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let inst = random_verify_instance(Seed(9800).derive(i), i % 2 == 1);
        let n = inst.dataset.n();
        let mut h = inst.h_hat.clone();
        h.log_signal_var = 0.1;

        let m = (n / 2).max(1).min(n - 1);
        let obj = Objective::clml(
            inst.dataset.clone(),
            inst.spec,
            ClmlConfig {
                m,
                permutations: 3,
                seed: Seed(9801).derive(i),
            },
        )
        .unwrap();

        let full = log_marginal_likelihood(&inst.dataset, &h, &inst.spec).unwrap();
        for subset in obj.clml_subsets() {
            let sub = inst.dataset.subset(&subset).unwrap();
            let part = log_marginal_likelihood(&sub, &h, &inst.spec).unwrap();
            let direct = conditional_log_density(&inst.dataset, &h, &inst.spec, &subset);
            let gap = (full.total - (part.total + direct)).abs() / full.total.abs().max(1.0);
            assert!(gap <= 1e-8, "instance {i}: chain identity gap {gap:e}");
            worst = worst.max(gap);
        }

        // degenerate conditioning sizes
        let all = Objective::clml(
            inst.dataset.clone(),
            inst.spec,
            ClmlConfig {
                m: n,
                permutations: 2,
                seed: Seed(1),
            },
        )
        .unwrap();
        assert_eq!(all.eval(&h).unwrap().0, 0.0, "m = N must give exactly 0");
        let none = Objective::clml(
            inst.dataset.clone(),
            inst.spec,
            ClmlConfig {
                m: 0,
                permutations: 2,
                seed: Seed(1),
            },
        )
        .unwrap();
        assert_eq!(
            none.eval(&h).unwrap().0,
            full.total,
            "m = 0 must give the full LML"
        );
    }
    println!(
        "ACCEPTANCE 8: PASS - CLML chain identity against direct conditional evaluation \
         on 20 instances (worst gap {worst:.2e})"
    );
}

#[test]
fn acceptance_09_dkl_comparison_harness() {
    let config = ComparisonConfig::small_n_default((1..=10).collect());
    let first = run_dkl_comparison(&config).unwrap();
    let second = run_dkl_comparison(&config).unwrap();

    let first_json = gplab::report::canonical_json(&to_checked_value(&first.runs).unwrap());
    let second_json = gplab::report::canonical_json(&to_checked_value(&second.runs).unwrap());
    assert_eq!(first_json, second_json, "per-seed reports must be byte-reproducible");

    assert_eq!(first.runs.len(), 10);
    for run in &first.runs {
        assert!(run.error.is_none(), "seed {}: {:?}", run.seed, run.error);
        for arm in [run.lml.as_ref().unwrap(), run.clml.as_ref().unwrap()] {
            assert!(arm.test_rmse.is_finite());
            assert!(arm.test_mean_nlpd.is_finite());
            assert!(arm.train_breakdown.total.is_finite());
            assert!(
                (0.0..=1.0).contains(&arm.train_mean_abs_offdiag_corr),
                "overcorrelation must be recorded and in [0, 1]"
            );
        }
    }
    println!(
        "ACCEPTANCE 9: PASS - DKL comparison completed on 10 seeds at N = 30 with finite \
         metrics, recorded overcorrelation, and byte-reproducible reports"
    );
}

#[test]
fn acceptance_10_cli_round_trip_and_exit_codes() {
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_gplab");
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("sweep.json");
    let out2 = dir.path().join("sweep2.json");

    let status = Command::new(bin)
        .args([
            "sweep",
            "--generate",
            "gp_sample",
            "--n",
            "20",
            "--noise-sd",
            "0.1",
            "--data-seed",
            "11",
            "--grid",
            "0.1:100:log:10",
            "--output",
        ])
        .arg(&out1)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let status = Command::new(bin)
        .args(["rerun", "--report"])
        .arg(&out1)
        .arg("--output")
        .arg(&out2)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let body = |p: &std::path::Path| {
        gplab::report::Report::parse(&std::fs::read_to_string(p).unwrap())
            .unwrap()
            .body()
    };
    assert_eq!(body(&out1), body(&out2), "rerun must reproduce the body byte-identically");
    let csv1 = std::fs::read(out1.with_file_name("sweep.sweep.csv")).unwrap();
    let csv2 = std::fs::read(out2.with_file_name("sweep2.sweep.csv")).unwrap();
    assert_eq!(csv1, csv2, "side tables must match");

    // verification suite from the command line
    let vout = dir.path().join("verify.json");
    let status = Command::new(bin)
        .args(["verify", "--random", "50", "--seed", "7", "--output"])
        .arg(&vout)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0), "verify --random 50 must pass");
    let report = gplab::report::Report::parse(&std::fs::read_to_string(&vout).unwrap()).unwrap();
    let max_resid = report.results["max_equivalence_residual"].as_f64().unwrap();
    assert!(max_resid <= 1e-8);

    // an unreachable tolerance must flip the exit code to 1
    let status = Command::new(bin)
        .args([
            "gradcheck",
            "--random",
            "3",
            "--tolerance",
            "1e-18",
            "--net-tolerance",
            "1e-18",
            "--output",
        ])
        .arg(dir.path().join("g.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // missing input file: exit 2 and no report written
    let missing_out = dir.path().join("missing.json");
    let status = Command::new(bin)
        .args(["fit", "--dataset", "/nonexistent/data.csv", "--output"])
        .arg(&missing_out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!missing_out.exists(), "no report may be written on input error");

    // the spec's scalar fit example, through the real interface
    let csv = dir.path().join("one.csv");
    std::fs::write(&csv, "x,y\n0.0,2.0\n").unwrap();
    let fout = dir.path().join("fit.json");
    let status = Command::new(bin)
        .args(["fit", "--dataset"])
        .arg(&csv)
        .args([
            "--lengthscale",
            "1.0",
            "--noise-var",
            "0.0",
            "--fix-lengthscale",
            "--fix-noise",
            "--max-iters",
            "200",
            "--grad-tol",
            "1e-10",
            "--output",
        ])
        .arg(&fout)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = gplab::report::Report::parse(&std::fs::read_to_string(&fout).unwrap()).unwrap();
    let sf2 = report.results["final"]["signal_var"].as_f64().unwrap();
    assert!((sf2 - 4.0).abs() < 1e-6, "final signal variance {sf2}");

    println!(
        "ACCEPTANCE 10: PASS - CLI round-trip is byte-identical and exit codes are 0/1/2 \
         as specified"
    );
}
