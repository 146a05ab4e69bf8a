//! Command execution behind the `gplab` binary: dataset ingestion, run
//! configurations, and deterministic report assembly.
//!
//! A report embeds its full `RunConfig`; re-running that config reproduces
//! the report body byte for byte (the `meta` block carries the timestamp and
//! is excluded from the comparison).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::error::Error;
use crate::gp::{log_marginal_likelihood, posterior_predict, Dataset};
use crate::kernels::{Hyperparameters, KernelFamily, KernelSpec, NoiseMode};
use crate::lab::{
    generate_synthetic, log_spaced_grid, random_verify_instance, run_dkl_comparison,
    run_lengthscale_sweep, ComparisonConfig, SyntheticKind, VerifyInstance,
};
use crate::net::{net_init, NetSpec};
use crate::numerics::Seed;
use crate::objective::{gradient_check, ClmlConfig, FixedMask, Objective, ObjectiveKind};
use crate::optimize::{optimize, OptConfig, StopReason};
use crate::profiled::{
    induced_hyperparameters, logdet_split, profiled_objective, sensitivity_of_profiled_amplitude,
    verify_stationarity,
};
use crate::report::{format_f64, to_checked_value, CsvTable, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("input file is empty")]
    EmptyFile,
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Engine(#[from] Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(context: &str, source: std::io::Error) -> CliError {
    CliError::Io {
        context: context.to_string(),
        source,
    }
}

/// Read a dataset from a headed CSV file: last column is the target, the
/// preceding columns are inputs. Rows are numbered from 1 including the
/// header, columns from 1.
pub fn ingest_csv(path: &Path) -> CliResult<Dataset> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    if content.trim().is_empty() {
        return Err(CliError::EmptyFile);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(content.as_bytes());
    let n_cols = reader
        .headers()
        .map_err(|e| CliError::Parse {
            row: 1,
            col: 1,
            message: e.to_string(),
        })?
        .len();
    if n_cols < 2 {
        return Err(CliError::Parse {
            row: 1,
            col: n_cols,
            message: "need at least 2 columns (inputs then target)".to_string(),
        });
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // header is row 1
        let record = record.map_err(|e| CliError::Parse {
            row,
            col: 1,
            message: e.to_string(),
        })?;
        if record.len() != n_cols {
            return Err(CliError::Parse {
                row,
                col: record.len(),
                message: format!("expected {n_cols} columns, found {}", record.len()),
            });
        }
        let mut values = Vec::with_capacity(n_cols);
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| CliError::Parse {
                row,
                col: j + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(CliError::NonFinite { row, col: j + 1 });
            }
            values.push(v);
        }
        let y = values.pop().expect("at least two columns");
        xs.push(values);
        ys.push(y);
    }
    if xs.is_empty() {
        return Err(CliError::EmptyFile);
    }
    Ok(Dataset::new(xs, ys)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: String,
    },
    Generate {
        spec: SyntheticKind,
        n: usize,
        noise_sd: f64,
        seed: u64,
    },
}

impl DataSource {
    pub fn load(&self) -> CliResult<Dataset> {
        match self {
            DataSource::Csv { path } => ingest_csv(Path::new(path)),
            DataSource::Generate {
                spec,
                n,
                noise_sd,
                seed,
            } => Ok(generate_synthetic(spec, *n, *noise_sd, Seed(*seed))?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net_widths: Option<Vec<usize>>,
    #[serde(default)]
    pub net_seed: u64,
}

impl KernelConfig {
    pub fn rbf() -> Self {
        Self {
            family: KernelFamily::Rbf,
            net_widths: None,
            net_seed: 0,
        }
    }

    fn spec(&self) -> KernelSpec {
        KernelSpec {
            family: self.family,
        }
    }

    /// Initial network for deep kernels, seeded from the config.
    fn initial_net(&self, input_dim: usize) -> CliResult<Option<crate::net::NetWeights>> {
        if self.family != KernelFamily::DeepRbf {
            return Ok(None);
        }
        let widths = self
            .net_widths
            .clone()
            .unwrap_or_else(|| vec![input_dim, 16, 16, 2]);
        if widths[0] != input_dim {
            return Err(CliError::BadConfig(format!(
                "net input width {} does not match data dimension {input_dim}",
                widths[0]
            )));
        }
        let spec = NetSpec::tanh_mlp(widths).map_err(CliError::Engine)?;
        Ok(Some(net_init(&spec, Seed(self.net_seed))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub data: DataSource,
    pub kernel: KernelConfig,
    pub objective: ObjectiveKind,
    pub noise_mode: NoiseMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clml_m: Option<usize>,
    #[serde(default = "default_permutations")]
    pub clml_permutations: usize,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_lengthscale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_signal_var: Option<f64>,
    /// Absolute noise variance, or the noise ratio in ratio mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_noise: Option<f64>,
    #[serde(default)]
    pub fixed: FixedMask,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

fn default_permutations() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScale {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridUnits {
    /// Grid values are multiples of the median pairwise input distance.
    Median,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub scale: GridScale,
    pub count: usize,
}

impl GridSpec {
    /// Parse the `lo:hi:log:count` flag syntax.
    pub fn parse(text: &str) -> CliResult<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 4 {
            return Err(CliError::BadConfig(format!(
                "grid `{text}` must be lo:hi:log:count or lo:hi:linear:count"
            )));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| CliError::BadConfig(format!("bad grid lower bound `{}`", parts[0])))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| CliError::BadConfig(format!("bad grid upper bound `{}`", parts[1])))?;
        let scale = match parts[2] {
            "log" => GridScale::Log,
            "linear" => GridScale::Linear,
            other => {
                return Err(CliError::BadConfig(format!(
                    "grid scale must be `log` or `linear`, got `{other}`"
                )))
            }
        };
        let count: usize = parts[3]
            .parse()
            .map_err(|_| CliError::BadConfig(format!("bad grid count `{}`", parts[3])))?;
        Ok(GridSpec {
            lo,
            hi,
            scale,
            count,
        })
    }

    pub fn values(&self) -> CliResult<Vec<f64>> {
        if self.count == 1 {
            return Ok(vec![self.lo]);
        }
        match self.scale {
            GridScale::Log => Ok(log_spaced_grid(self.lo, self.hi, self.count)?),
            GridScale::Linear => {
                if !(self.lo < self.hi) {
                    return Err(CliError::BadConfig("grid needs lo < hi".into()));
                }
                Ok((0..self.count)
                    .map(|i| {
                        self.lo + (self.hi - self.lo) * i as f64 / (self.count - 1) as f64
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub data: DataSource,
    pub kernel: KernelConfig,
    pub grid: GridSpec,
    pub grid_units: GridUnits,
    pub signal_var: f64,
    pub noise_var: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    /// Noise ratio for the hat parameters in dataset mode.
    #[serde(default = "default_noise_ratio")]
    pub noise_ratio: f64,
    pub tolerance: f64,
    pub seed: u64,
}

fn default_noise_ratio() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    pub objective: ObjectiveKind,
    pub step: f64,
    pub tolerance: f64,
    pub net_tolerance: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Fit(FitConfig),
    Sweep(SweepConfig),
    Compare(ComparisonConfig),
    Verify(VerifyConfig),
    Gradcheck(GradcheckConfig),
}

/// The full embedded configuration: the command plus the output path it was
/// asked to write. Re-running a report's embedded `RunSpec` reproduces the
/// report body byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    #[serde(flatten)]
    pub config: RunConfig,
    pub output: String,
}

/// Everything a command produces: the report document, plot-ready CSV
/// tables, and whether any verification check failed (exit code 1).
#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub tables: Vec<CsvTable>,
    pub verification_failed: bool,
}

fn meta_block() -> serde_json::Value {
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "tool": "gplab",
        "version": env!("CARGO_PKG_VERSION"),
        "created_unix": created,
    })
}

pub fn run_command(spec: &RunSpec) -> CliResult<RunOutcome> {
    let config_value = to_checked_value(spec)?;
    let (results, tables, verification_failed) = match &spec.config {
        RunConfig::Fit(c) => run_fit(c)?,
        RunConfig::Sweep(c) => run_sweep(c)?,
        RunConfig::Compare(c) => run_compare(c)?,
        RunConfig::Verify(c) => run_verify(c)?,
        RunConfig::Gradcheck(c) => run_gradcheck(c)?,
    };
    Ok(RunOutcome {
        report: Report::new(config_value, results, meta_block()),
        tables,
        verification_failed,
    })
}

/// Write the report and its CSV side files; returns the paths written.
pub fn write_outputs(outcome: &RunOutcome, output: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    std::fs::write(output, outcome.report.document())
        .map_err(|e| io_err(&format!("writing {}", output.display()), e))?;
    written.push(output.to_path_buf());
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "report".to_string());
    for table in &outcome.tables {
        let path = output.with_file_name(format!("{stem}.{}.csv", table.name));
        std::fs::write(&path, table.to_csv())
            .map_err(|e| io_err(&format!("writing {}", path.display()), e))?;
        written.push(path);
    }
    Ok(written)
}

fn stop_reason_str(reason: StopReason) -> &'static str {
    match reason {
        StopReason::GradientTol => "gradient_tol",
        StopReason::MaxIters => "max_iters",
        StopReason::LineSearchFailure => "line_search_failure",
    }
}

fn run_fit(cfg: &FitConfig) -> CliResult<(serde_json::Value, Vec<CsvTable>, bool)> {
    let dataset = cfg.data.load()?;
    let spec = cfg.kernel.spec();

    let mut obj = match cfg.objective {
        ObjectiveKind::Lml => Objective::lml(dataset.clone(), spec),
        ObjectiveKind::ProfiledLml => Objective::profiled(dataset.clone(), spec),
        ObjectiveKind::Clml => Objective::clml(
            dataset.clone(),
            spec,
            ClmlConfig {
                m: cfg
                    .clml_m
                    .unwrap_or_else(|| (0.8 * dataset.n() as f64).ceil() as usize),
                permutations: cfg.clml_permutations,
                seed: Seed(cfg.seed).derive(101),
            },
        )
        .map_err(CliError::Engine)?,
    };
    obj.weight_decay = cfg.weight_decay;
    obj.fixed = cfg.fixed;

    let mut theta0 = obj.default_init(Seed(cfg.kernel.net_seed));
    theta0.noise_mode = match cfg.objective {
        ObjectiveKind::ProfiledLml => NoiseMode::Ratio,
        _ => cfg.noise_mode,
    };
    if let Some(l) = cfg.init_lengthscale {
        theta0.log_lengthscale = l.ln();
    }
    if let Some(sf2) = cfg.init_signal_var {
        theta0.log_signal_var = sf2.ln();
    }
    if let Some(noise) = cfg.init_noise {
        theta0.log_noise = noise.ln();
    }
    if let Some(net) = cfg.kernel.initial_net(dataset.dim())? {
        theta0.net = Some(net);
    }

    let trace = optimize(
        &obj,
        &theta0,
        &OptConfig {
            max_iters: cfg.max_iters,
            grad_tol: cfg.grad_tol,
            seed: Seed(cfg.seed),
        },
    )
    .map_err(CliError::Engine)?;

    let h = &trace.final_hyperparameters;
    let (report_h, profiled_block) = match cfg.objective {
        ObjectiveKind::ProfiledLml => {
            let pr = profiled_objective(&dataset, h, &spec).map_err(CliError::Engine)?;
            let induced = induced_hyperparameters(h, pr.sigma_f_hat_sq);
            (induced, Some(pr))
        }
        _ => (h.clone(), None),
    };
    let breakdown = log_marginal_likelihood(&dataset, &report_h, &spec).map_err(CliError::Engine)?;
    let posterior =
        posterior_predict(&dataset, &report_h, &spec, dataset.inputs()).map_err(CliError::Engine)?;
    let mut se = 0.0;
    let mut nlpd = 0.0;
    for i in 0..dataset.n() {
        let err = posterior.mean[i] - dataset.targets()[i];
        se += err * err;
        let var = posterior.variance[i].max(1e-12);
        nlpd += 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + err * err / var);
    }

    let mut results = json!({
        "final": {
            "lengthscale": report_h.lengthscale(),
            "signal_var": report_h.signal_var(),
            "noise_var": report_h.noise_var(),
            "net_param_count": report_h.net.as_ref().map(|w| w.flat().len()).unwrap_or(0),
        },
        "breakdown": to_checked_value(&breakdown)?,
        "optimizer": {
            "converged": trace.converged,
            "reason": stop_reason_str(trace.reason),
            "iterations": trace.iterations.len(),
            "final_value": trace.final_value,
        },
        "train_metrics": {
            "rmse": (se / dataset.n() as f64).sqrt(),
            "mean_nlpd": nlpd / dataset.n() as f64,
        },
    });
    if let Some(pr) = profiled_block {
        results["profiled"] = to_checked_value(&pr)?;
    }
    let results = to_checked_value(&results)?;

    let names = obj.coord_names(&theta0);
    let mut header = vec!["iter", "value", "grad_max_norm", "step"];
    header.extend(names.iter().map(|s| s.as_str()));
    let mut table = CsvTable::new("trace", &header);
    for (i, rec) in trace.iterations.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            format_f64(rec.value),
            format_f64(rec.grad_max_norm),
            format_f64(rec.step),
        ];
        row.extend(rec.theta.iter().map(|v| format_f64(*v)));
        table.push_row(row);
    }

    Ok((results, vec![table], false))
}

fn run_sweep(cfg: &SweepConfig) -> CliResult<(serde_json::Value, Vec<CsvTable>, bool)> {
    let dataset = cfg.data.load()?;
    let spec = cfg.kernel.spec();
    if !(cfg.signal_var > 0.0) || !(cfg.noise_var >= 0.0) {
        return Err(CliError::BadConfig(
            "sweep needs signal_var > 0 and noise_var >= 0".into(),
        ));
    }

    let unit = match cfg.grid_units {
        GridUnits::Median => dataset.median_pairwise_distance(),
        GridUnits::Absolute => 1.0,
    };
    let grid: Vec<f64> = cfg.grid.values()?.into_iter().map(|v| v * unit).collect();

    let mut h_base = Hyperparameters::rbf(
        0.0,
        cfg.signal_var.ln(),
        cfg.noise_var.ln(),
        NoiseMode::Absolute,
    );
    if let Some(net) = cfg.kernel.initial_net(dataset.dim())? {
        h_base.net = Some(net);
    }

    let report = run_lengthscale_sweep(&dataset, &grid, &h_base, &spec).map_err(CliError::Engine)?;

    let results = to_checked_value(&json!({
        "argmax_row": report.argmax_row,
        "argmax_lengthscale": report.rows[report.argmax_row].lengthscale,
        "grid_unit": unit,
        "rows": to_checked_value(&report.rows)?,
    }))?;

    let mut table = CsvTable::new(
        "sweep",
        &[
            "lengthscale",
            "data_fit",
            "complexity",
            "total",
            "logdet",
            "effective_rank",
            "mean_abs_offdiag_corr",
        ],
    );
    for row in &report.rows {
        table.push_row(vec![
            format_f64(row.lengthscale),
            format_f64(row.data_fit),
            format_f64(row.complexity),
            format_f64(row.total),
            format_f64(row.logdet),
            format_f64(row.effective_rank),
            format_f64(row.mean_abs_offdiag_corr),
        ]);
    }
    Ok((results, vec![table], false))
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(values[values.len() / 2])
}

fn run_compare(cfg: &ComparisonConfig) -> CliResult<(serde_json::Value, Vec<CsvTable>, bool)> {
    let report = run_dkl_comparison(cfg).map_err(CliError::Engine)?;

    let mut lml_rmse: Vec<f64> = Vec::new();
    let mut clml_rmse: Vec<f64> = Vec::new();
    for run in &report.runs {
        if let Some(m) = &run.lml {
            lml_rmse.push(m.test_rmse);
        }
        if let Some(m) = &run.clml {
            clml_rmse.push(m.test_rmse);
        }
    }
    let completed = report.runs.iter().filter(|r| r.error.is_none()).count();
    let mut summary = serde_json::Map::new();
    summary.insert("runs_total".into(), json!(report.runs.len()));
    summary.insert("runs_completed".into(), json!(completed));
    if let Some(v) = median(&mut lml_rmse) {
        summary.insert("lml_median_test_rmse".into(), json!(v));
    }
    if let Some(v) = median(&mut clml_rmse) {
        summary.insert("clml_median_test_rmse".into(), json!(v));
    }

    let results = to_checked_value(&json!({
        "runs": to_checked_value(&report.runs)?,
        "summary": serde_json::Value::Object(summary),
    }))?;

    let mut table = CsvTable::new(
        "compare",
        &[
            "seed",
            "objective",
            "final_log_lengthscale",
            "final_log_signal_var",
            "final_log_noise",
            "train_total",
            "train_data_fit",
            "train_complexity",
            "test_rmse",
            "test_mean_nlpd",
            "train_mean_abs_offdiag_corr",
            "iterations",
            "converged",
        ],
    );
    for run in &report.runs {
        for (label, arm) in [("lml", &run.lml), ("clml", &run.clml)] {
            if let Some(m) = arm {
                table.push_row(vec![
                    run.seed.to_string(),
                    label.to_string(),
                    format_f64(m.final_log_lengthscale),
                    format_f64(m.final_log_signal_var),
                    format_f64(m.final_log_noise),
                    format_f64(m.train_breakdown.total),
                    format_f64(m.train_breakdown.data_fit),
                    format_f64(m.train_breakdown.complexity),
                    format_f64(m.test_rmse),
                    format_f64(m.test_mean_nlpd),
                    format_f64(m.train_mean_abs_offdiag_corr),
                    m.iterations.to_string(),
                    m.converged.to_string(),
                ]);
            }
        }
    }
    Ok((results, vec![table], false))
}

struct VerifyRow {
    label: String,
    n: usize,
    kernel: &'static str,
    equivalence_rel: f64,
    split_rel: f64,
    collapse_abs: f64,
    stationarity_grad: f64,
    locally_maximal: bool,
    amplitude_sensitivity: f64,
}

fn verify_one(
    label: String,
    inst: &VerifyInstance,
    enforce_nonzero_sensitivity: bool,
    tolerance: f64,
) -> CliResult<(VerifyRow, bool)> {
    let d = &inst.dataset;
    let pr = profiled_objective(d, &inst.h_hat, &inst.spec).map_err(CliError::Engine)?;
    let equivalence_rel = pr.equivalence_residual / pr.profiled_total.abs().max(1.0);

    let induced = induced_hyperparameters(&inst.h_hat, pr.sigma_f_hat_sq);
    let (lhs, rhs) = logdet_split(d, &induced, &inst.spec).map_err(CliError::Engine)?;
    let split_rel = (lhs - rhs).abs() / lhs.abs().max(1.0);

    let full = log_marginal_likelihood(d, &induced, &inst.spec).map_err(CliError::Engine)?;
    let collapse_abs = (full.data_fit + 0.5 * d.n() as f64).abs();

    let st = verify_stationarity(d, &inst.h_hat, &inst.spec).map_err(CliError::Engine)?;
    let sens =
        sensitivity_of_profiled_amplitude(d, &inst.h_hat, &inst.spec).map_err(CliError::Engine)?;

    let row = VerifyRow {
        label,
        n: d.n(),
        kernel: match inst.spec.family {
            KernelFamily::Rbf => "rbf",
            KernelFamily::DeepRbf => "deep_rbf",
        },
        equivalence_rel,
        split_rel,
        collapse_abs,
        stationarity_grad: st.gradient_at_max,
        locally_maximal: st.locally_maximal,
        amplitude_sensitivity: sens.d_log_lengthscale,
    };
    let mut pass = equivalence_rel <= tolerance
        && split_rel <= tolerance
        && collapse_abs <= tolerance
        && st.gradient_at_max.abs() <= tolerance
        && st.locally_maximal;
    if enforce_nonzero_sensitivity && sens.d_log_lengthscale.abs() <= 1e-12 {
        pass = false;
    }
    Ok((row, pass))
}

fn run_verify(cfg: &VerifyConfig) -> CliResult<(serde_json::Value, Vec<CsvTable>, bool)> {
    let mut instances: Vec<(String, VerifyInstance, bool)> = Vec::new();
    match (&cfg.data, cfg.random) {
        (Some(source), None) => {
            let dataset = source.load()?;
            let kernel = cfg.kernel.clone().unwrap_or_else(KernelConfig::rbf);
            let mut h_hat = Hyperparameters::rbf(
                dataset.median_pairwise_distance().ln(),
                0.0,
                cfg.noise_ratio.ln(),
                NoiseMode::Ratio,
            );
            h_hat.net = kernel.initial_net(dataset.dim())?;
            instances.push((
                "dataset".to_string(),
                VerifyInstance {
                    dataset,
                    h_hat,
                    spec: kernel.spec(),
                },
                false,
            ));
        }
        (None, Some(count)) => {
            if count == 0 {
                return Err(CliError::BadConfig("--random needs a positive count".into()));
            }
            for i in 0..count {
                let inst = random_verify_instance(Seed(cfg.seed).derive(i as u64), i % 2 == 1);
                instances.push((format!("random[{i}]"), inst, true));
            }
        }
        _ => {
            return Err(CliError::BadConfig(
                "verify needs exactly one of a dataset or --random".into(),
            ))
        }
    }

    let mut rows = Vec::new();
    let mut all_pass = true;
    let mut max_equivalence: f64 = 0.0;
    let mut max_split: f64 = 0.0;
    let mut max_collapse: f64 = 0.0;
    let mut max_stationarity: f64 = 0.0;
    for (label, inst, enforce) in &instances {
        let (row, pass) = verify_one(label.clone(), inst, *enforce, cfg.tolerance)?;
        all_pass &= pass;
        max_equivalence = max_equivalence.max(row.equivalence_rel);
        max_split = max_split.max(row.split_rel);
        max_collapse = max_collapse.max(row.collapse_abs);
        max_stationarity = max_stationarity.max(row.stationarity_grad.abs());
        rows.push(row);
    }

    let results = to_checked_value(&json!({
        "instances": rows.len(),
        "passed": all_pass,
        "tolerance": cfg.tolerance,
        "max_equivalence_residual": max_equivalence,
        "max_split_residual": max_split,
        "max_collapse_residual": max_collapse,
        "max_stationarity_gradient": max_stationarity,
    }))?;

    let mut table = CsvTable::new(
        "verify",
        &[
            "instance",
            "n",
            "kernel",
            "equivalence_rel",
            "split_rel",
            "collapse_abs",
            "stationarity_grad",
            "locally_maximal",
            "amplitude_sensitivity_log_lengthscale",
        ],
    );
    for row in &rows {
        table.push_row(vec![
            row.label.clone(),
            row.n.to_string(),
            row.kernel.to_string(),
            format_f64(row.equivalence_rel),
            format_f64(row.split_rel),
            format_f64(row.collapse_abs),
            format_f64(row.stationarity_grad),
            row.locally_maximal.to_string(),
            format_f64(row.amplitude_sensitivity),
        ]);
    }
    Ok((results, vec![table], !all_pass))
}

fn run_gradcheck(cfg: &GradcheckConfig) -> CliResult<(serde_json::Value, Vec<CsvTable>, bool)> {
    let mut instances: Vec<(String, VerifyInstance)> = Vec::new();
    match (&cfg.data, cfg.random) {
        (Some(source), None) => {
            let dataset = source.load()?;
            let kernel = cfg.kernel.clone().unwrap_or_else(KernelConfig::rbf);
            let mut h_hat = Hyperparameters::rbf(
                dataset.median_pairwise_distance().ln(),
                0.0,
                0.1f64.ln(),
                NoiseMode::Ratio,
            );
            h_hat.net = kernel.initial_net(dataset.dim())?;
            instances.push((
                "dataset".to_string(),
                VerifyInstance {
                    dataset,
                    h_hat,
                    spec: kernel.spec(),
                },
            ));
        }
        (None, Some(count)) => {
            if count == 0 {
                return Err(CliError::BadConfig("--random needs a positive count".into()));
            }
            for i in 0..count {
                let inst = random_verify_instance(Seed(cfg.seed).derive(i as u64), i % 2 == 1);
                instances.push((format!("random[{i}]"), inst));
            }
        }
        _ => {
            return Err(CliError::BadConfig(
                "gradcheck needs exactly one of a dataset or --random".into(),
            ))
        }
    }

    let mut table = CsvTable::new("gradcheck", &["instance", "coordinate", "rel_error"]);
    let mut all_pass = true;
    let mut max_scalar: f64 = 0.0;
    let mut max_net: f64 = 0.0;
    for (label, inst) in &instances {
        let obj = match cfg.objective {
            ObjectiveKind::Lml => Objective::lml(inst.dataset.clone(), inst.spec),
            ObjectiveKind::ProfiledLml => Objective::profiled(inst.dataset.clone(), inst.spec),
            ObjectiveKind::Clml => Objective::clml(
                inst.dataset.clone(),
                inst.spec,
                ClmlConfig::defaults(inst.dataset.n(), Seed(cfg.seed).derive(202)),
            )
            .map_err(CliError::Engine)?,
        };
        let check = gradient_check(&obj, &inst.h_hat, cfg.step).map_err(CliError::Engine)?;
        for (name, err) in &check.per_coord {
            let tol = if name.starts_with("net[") {
                cfg.net_tolerance
            } else {
                cfg.tolerance
            };
            if *err > tol {
                all_pass = false;
            }
            if name.starts_with("net[") {
                max_net = max_net.max(*err);
            } else {
                max_scalar = max_scalar.max(*err);
            }
            table.push_row(vec![label.clone(), name.clone(), format_f64(*err)]);
        }
    }

    let results = to_checked_value(&json!({
        "instances": instances.len(),
        "passed": all_pass,
        "step": cfg.step,
        "tolerance": cfg.tolerance,
        "net_tolerance": cfg.net_tolerance,
        "max_rel_error_scalar": max_scalar,
        "max_rel_error_net": max_net,
    }))?;
    Ok((results, vec![table], !all_pass))
}
