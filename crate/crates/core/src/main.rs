//! `gplab` — exact GP regression experiments from the command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gplab::cli::{
    run_command, write_outputs, CliError, DataSource, FitConfig, GradcheckConfig, GridSpec,
    GridUnits, KernelConfig, RunConfig, RunSpec, SweepConfig, VerifyConfig,
};
use gplab::kernels::{KernelFamily, NoiseMode};
use gplab::lab::{ComparisonConfig, SyntheticKind};
use gplab::objective::{FixedMask, ObjectiveKind};
use gplab::report::Report;

#[derive(Parser)]
#[command(name = "gplab", version, about = "Exact GP regression lab: marginal-likelihood decomposition, profiled amplitude, CLML, and lengthscale experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize an objective and report the trace, final breakdown, and
    /// training posterior metrics
    Fit(FitArgs),
    /// Evaluate the likelihood breakdown along a lengthscale grid
    Sweep(SweepArgs),
    /// Train a deep kernel under LML and CLML from identical initialization
    Compare(CompareArgs),
    /// Check the profiled-likelihood identities (exit 1 on violation)
    Verify(VerifyArgs),
    /// Compare analytic objective gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Re-run the configuration embedded in an existing report
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    #[value(name = "gp_sample")]
    GpSample,
    Sine,
    Step,
}

#[derive(Args)]
struct DataArgs {
    /// CSV dataset: header row, inputs first, target last
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Synthetic generator instead of a file
    #[arg(long, value_enum)]
    generate: Option<GenKind>,
    /// Sample count for --generate
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Observation noise standard deviation for --generate
    #[arg(long, default_value_t = 0.1)]
    noise_sd: f64,
    /// True lengthscale for --generate gp_sample
    #[arg(long, default_value_t = 1.0)]
    gen_lengthscale: f64,
    /// True signal variance for --generate gp_sample
    #[arg(long, default_value_t = 1.0)]
    gen_signal_var: f64,
    /// Seed for --generate
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

impl DataArgs {
    fn to_source(&self) -> Result<DataSource, CliError> {
        match (&self.dataset, self.generate) {
            (Some(path), None) => Ok(DataSource::Csv {
                path: path.to_string_lossy().into_owned(),
            }),
            (None, Some(kind)) => {
                let spec = match kind {
                    GenKind::GpSample => SyntheticKind::GpSample {
                        lengthscale: self.gen_lengthscale,
                        signal_var: self.gen_signal_var,
                    },
                    GenKind::Sine => SyntheticKind::Sine,
                    GenKind::Step => SyntheticKind::Step,
                };
                Ok(DataSource::Generate {
                    spec,
                    n: self.n,
                    noise_sd: self.noise_sd,
                    seed: self.data_seed,
                })
            }
            _ => Err(CliError::BadConfig(
                "provide exactly one of --dataset or --generate".into(),
            )),
        }
    }

    fn to_optional_source(&self) -> Result<Option<DataSource>, CliError> {
        if self.dataset.is_none() && self.generate.is_none() {
            Ok(None)
        } else {
            self.to_source().map(Some)
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    #[value(name = "deep_rbf")]
    DeepRbf,
}

#[derive(Args)]
struct KernelArgs {
    /// Kernel family
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelArg,
    /// Feature-net layer widths for deep_rbf, input width first
    #[arg(long, value_delimiter = ',')]
    net: Option<Vec<usize>>,
    /// Seed for the feature-net initialization
    #[arg(long, default_value_t = 0)]
    net_seed: u64,
}

impl KernelArgs {
    fn to_config(&self) -> KernelConfig {
        KernelConfig {
            family: match self.kernel {
                KernelArg::Rbf => KernelFamily::Rbf,
                KernelArg::DeepRbf => KernelFamily::DeepRbf,
            },
            net_widths: self.net.clone(),
            net_seed: self.net_seed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Lml,
    #[value(name = "profiled_lml")]
    ProfiledLml,
    Clml,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(a: ObjectiveArg) -> Self {
        match a {
            ObjectiveArg::Lml => ObjectiveKind::Lml,
            ObjectiveArg::ProfiledLml => ObjectiveKind::ProfiledLml,
            ObjectiveArg::Clml => ObjectiveKind::Clml,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseModeArg {
    Absolute,
    Ratio,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Training objective
    #[arg(long, value_enum, default_value = "lml")]
    objective: ObjectiveArg,
    /// Noise parametrization: absolute sn2 or the ratio sn2/sf2
    #[arg(long, value_enum, default_value = "absolute")]
    noise_mode: NoiseModeArg,
    /// CLML conditioning-set size (default: ceil(0.8 N))
    #[arg(long)]
    clml_m: Option<usize>,
    /// CLML permutation count
    #[arg(long, default_value_t = 10)]
    clml_permutations: usize,
    /// Quadratic penalty coefficient on feature-net weights
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    /// Initial lengthscale (default: median pairwise distance)
    #[arg(long)]
    lengthscale: Option<f64>,
    /// Initial signal variance (default: var(y))
    #[arg(long)]
    signal_var: Option<f64>,
    /// Initial noise variance, or noise ratio in ratio mode
    #[arg(long)]
    noise_var: Option<f64>,
    /// Hold the lengthscale fixed
    #[arg(long, default_value_t = false)]
    fix_lengthscale: bool,
    /// Hold the signal variance fixed
    #[arg(long, default_value_t = false)]
    fix_signal_var: bool,
    /// Hold the noise fixed
    #[arg(long, default_value_t = false)]
    fix_noise: bool,
    /// Hold the feature-net weights fixed
    #[arg(long, default_value_t = false)]
    fix_net: bool,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    grad_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "gplab-fit.json")]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridUnitsArg {
    Median,
    Absolute,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Lengthscale grid, lo:hi:log:count or lo:hi:linear:count
    #[arg(long, default_value = "0.1:1000:log:25")]
    grid: String,
    /// Interpret grid values in units of the median pairwise distance, or
    /// as absolute lengthscales
    #[arg(long, value_enum, default_value = "median")]
    grid_units: GridUnitsArg,
    /// Pinned signal variance
    #[arg(long, default_value_t = 1.0)]
    signal_var: f64,
    /// Pinned noise variance
    #[arg(long, default_value_t = 0.01)]
    noise_var: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "gplab-sweep.json")]
    output: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Synthetic data family for the comparison
    #[arg(long, value_enum, default_value = "gp_sample")]
    generate: GenKind,
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sd: f64,
    #[arg(long, default_value_t = 1.0)]
    gen_lengthscale: f64,
    #[arg(long, default_value_t = 1.0)]
    gen_signal_var: f64,
    /// Feature-net layer widths, input width first
    #[arg(long, value_delimiter = ',', default_value = "1,16,16,2")]
    net: Vec<usize>,
    /// CLML conditioning fraction of the training set
    #[arg(long, default_value_t = 0.8)]
    clml_m_fraction: f64,
    #[arg(long, default_value_t = 10)]
    clml_permutations: usize,
    #[arg(long, default_value_t = 60)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    grad_tol: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    /// Seeds, one run per seed
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "gplab-compare.json")]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Verify on this many seeded random instances instead of a dataset
    #[arg(long)]
    random: Option<usize>,
    /// Noise ratio of the hat parameters in dataset mode
    #[arg(long, default_value_t = 0.1)]
    noise_ratio: f64,
    /// Residual tolerance for every identity
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "gplab-verify.json")]
    output: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Check this many seeded random instances instead of a dataset
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, value_enum, default_value = "lml")]
    objective: ObjectiveArg,
    /// Central-difference step in the packed log/weight domain
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    /// Tolerance for scalar hyperparameter coordinates
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// Tolerance for feature-net weight coordinates
    #[arg(long, default_value_t = 1e-3)]
    net_tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "gplab-gradcheck.json")]
    output: PathBuf,
}

#[derive(Args)]
struct RerunArgs {
    /// Existing report whose embedded config should be replayed
    #[arg(long)]
    report: PathBuf,
    /// Where to write the replayed report (default: the embedded output path)
    #[arg(long)]
    output: Option<PathBuf>,
}

fn build_spec(command: Command) -> Result<(RunSpec, PathBuf), CliError> {
    match command {
        Command::Fit(a) => {
            let output = a.output.clone();
            let spec = RunSpec {
                config: RunConfig::Fit(FitConfig {
                    data: a.data.to_source()?,
                    kernel: a.kernel.to_config(),
                    objective: a.objective.into(),
                    noise_mode: match a.noise_mode {
                        NoiseModeArg::Absolute => NoiseMode::Absolute,
                        NoiseModeArg::Ratio => NoiseMode::Ratio,
                    },
                    clml_m: a.clml_m,
                    clml_permutations: a.clml_permutations,
                    weight_decay: a.weight_decay,
                    init_lengthscale: a.lengthscale,
                    init_signal_var: a.signal_var,
                    init_noise: a.noise_var,
                    fixed: FixedMask {
                        lengthscale: a.fix_lengthscale,
                        signal_var: a.fix_signal_var,
                        noise: a.fix_noise,
                        net: a.fix_net,
                    },
                    max_iters: a.max_iters,
                    grad_tol: a.grad_tol,
                    seed: a.seed,
                }),
                output: output.to_string_lossy().into_owned(),
            };
            Ok((spec, output))
        }
        Command::Sweep(a) => {
            let output = a.output.clone();
            let spec = RunSpec {
                config: RunConfig::Sweep(SweepConfig {
                    data: a.data.to_source()?,
                    kernel: a.kernel.to_config(),
                    grid: GridSpec::parse(&a.grid)?,
                    grid_units: match a.grid_units {
                        GridUnitsArg::Median => GridUnits::Median,
                        GridUnitsArg::Absolute => GridUnits::Absolute,
                    },
                    signal_var: a.signal_var,
                    noise_var: a.noise_var,
                    seed: a.seed,
                }),
                output: output.to_string_lossy().into_owned(),
            };
            Ok((spec, output))
        }
        Command::Compare(a) => {
            let output = a.output.clone();
            let data = match a.generate {
                GenKind::GpSample => SyntheticKind::GpSample {
                    lengthscale: a.gen_lengthscale,
                    signal_var: a.gen_signal_var,
                },
                GenKind::Sine => SyntheticKind::Sine,
                GenKind::Step => SyntheticKind::Step,
            };
            let spec = RunSpec {
                config: RunConfig::Compare(ComparisonConfig {
                    data,
                    n: a.n,
                    noise_sd: a.noise_sd,
                    net_widths: a.net,
                    clml_m_fraction: a.clml_m_fraction,
                    clml_permutations: a.clml_permutations,
                    max_iters: a.max_iters,
                    grad_tol: a.grad_tol,
                    weight_decay: a.weight_decay,
                    seeds: a.seeds,
                }),
                output: output.to_string_lossy().into_owned(),
            };
            Ok((spec, output))
        }
        Command::Verify(a) => {
            let output = a.output.clone();
            let spec = RunSpec {
                config: RunConfig::Verify(VerifyConfig {
                    data: a.data.to_optional_source()?,
                    random: a.random,
                    kernel: Some(a.kernel.to_config()),
                    noise_ratio: a.noise_ratio,
                    tolerance: a.tolerance,
                    seed: a.seed,
                }),
                output: output.to_string_lossy().into_owned(),
            };
            Ok((spec, output))
        }
        Command::Gradcheck(a) => {
            let output = a.output.clone();
            let spec = RunSpec {
                config: RunConfig::Gradcheck(GradcheckConfig {
                    data: a.data.to_optional_source()?,
                    random: a.random,
                    kernel: Some(a.kernel.to_config()),
                    objective: a.objective.into(),
                    step: a.step,
                    tolerance: a.tolerance,
                    net_tolerance: a.net_tolerance,
                    seed: a.seed,
                }),
                output: output.to_string_lossy().into_owned(),
            };
            Ok((spec, output))
        }
        Command::Rerun(a) => {
            let text = std::fs::read_to_string(&a.report).map_err(|e| CliError::Io {
                context: format!("reading {}", a.report.display()),
                source: e,
            })?;
            let report = Report::parse(&text)?;
            let spec: RunSpec = serde_json::from_value(report.config)
                .map_err(|e| CliError::BadConfig(format!("embedded config: {e}")))?;
            let output = a
                .output
                .clone()
                .unwrap_or_else(|| PathBuf::from(spec.output.clone()));
            Ok((spec, output))
        }
    }
}

fn run(cli: Cli) -> i32 {
    let (spec, output) = match build_spec(cli.command) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match run_command(&spec) {
        Ok(outcome) => {
            match write_outputs(&outcome, &output) {
                Ok(paths) => {
                    for p in paths {
                        println!("wrote {}", p.display());
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            }
            if outcome.verification_failed {
                eprintln!("verification failed, see {}", output.display());
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}
