//! Command-line interface: `fit`, `eval`, `sample` and `synth`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mstmix::error::Error;
use mstmix::io::{
    generate_synthetic, load_csv, load_model, save_model, write_csv, write_trace, FitMetadata, ModelDocument,
    SyntheticSpec,
};
use mstmix::mixture::{classify_from, log_likelihood_from, responsibilities_from, sample_mixture, weighted_log_densities};
use mstmix::kernel::DEFAULT_DENSITY_SEED;
use mstmix::trainer::{fit, ConstraintMode, NuInit, PenaltySpec, StopRule, TrainerConfig, DEFAULT_BETA};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Seed used when neither `--seed` nor the environment provides one.
pub const SEED_ENV: &str = "FIMREST_SEED";

#[derive(Debug, Parser)]
#[command(name = "mstmix", version, about = "Fit, evaluate and sample finite mixtures of skew-t distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a mixture to CSV data.
    Fit(FitArgs),
    /// Log-likelihood and hard labels of data under a saved model.
    Eval(EvalArgs),
    /// Draw samples from a saved model.
    Sample(SampleArgs),
    /// Generate the planar two-cluster synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Full skewness with the degrees-of-freedom penalty.
    Fimrest,
    /// Full skewness without penalty (beta forced to 0).
    Fmcfust,
    /// Diagonal skewness.
    DiagSkew,
    /// Symmetric t kernels.
    TMix,
    /// Gaussian kernels.
    Gmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stop {
    Both,
    Either,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated column names.
    #[arg(long, value_delimiter = ',', required = true)]
    cols: Vec<String>,
    /// Number of kernels.
    #[arg(long)]
    g: usize,
    #[arg(long, value_enum, default_value = "fimrest")]
    mode: Mode,
    /// Penalty per kernel, one value or a comma-separated list. Defaults to
    /// 1e-5 for fimrest and 0 otherwise.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Initial degrees of freedom, one value or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    nu_init: Option<Vec<f64>>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Output model document.
    #[arg(long)]
    out: PathBuf,
    /// Output trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    delta_nu: Option<f64>,
    #[arg(long)]
    delta_l: Option<f64>,
    #[arg(long)]
    nu_max: Option<f64>,
    #[arg(long, value_enum, default_value = "both")]
    stop: Stop,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    cols: Vec<String>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(short = 'n', long)]
    n: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["spec", "seed"]))]
struct SynthArgs {
    /// JSON synthetic specification.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Seed for the default specification.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            e if e.is_numerical() => EXIT_NUMERICAL,
            Error::InvalidParameter(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// Runs the CLI on `args` (program name first), writing results to `out`
/// and diagnostics to the error stream. Returns the exit code.
pub fn run<I, A>(args: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            eprint!("{}", e.render());
            return code;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Eval(a) => run_eval(a, out),
        Command::Sample(a) => run_sample(a),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn trainer_config(a: &FitArgs) -> Result<TrainerConfig<f64>, Failure> {
    let (mode, default_beta) = match a.mode {
        Mode::Fimrest => (ConstraintMode::Full, DEFAULT_BETA),
        Mode::Fmcfust => (ConstraintMode::Full, 0.0),
        Mode::DiagSkew => (ConstraintMode::DiagonalSkew, 0.0),
        Mode::TMix => (ConstraintMode::ZeroSkew, 0.0),
        Mode::Gmm => (ConstraintMode::Gaussian, 0.0),
    };
    let mut cfg = TrainerConfig::with_mode(mode);
    let beta = match (a.mode, &a.beta) {
        (Mode::Fmcfust, Some(b)) if b.iter().any(|&v| v != 0.0) => {
            log::warn!("--beta is ignored in fmcfust mode");
            vec![0.0]
        }
        (Mode::Fmcfust, _) | (_, None) => vec![default_beta],
        (_, Some(b)) => b.clone(),
    };
    cfg.beta = PenaltySpec::new(beta)?;
    if let Some(nu) = &a.nu_init {
        cfg.nu_init = match nu.as_slice() {
            [v] => NuInit::Scalar(*v),
            v => NuInit::PerKernel(v.to_vec()),
        };
    }
    cfg.seed = a.seed;
    cfg.stop_rule = match a.stop {
        Stop::Both => StopRule::Both,
        Stop::Either => StopRule::Either,
    };
    if let Some(v) = a.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = a.delta_nu {
        cfg.delta_nu = v;
    }
    if a.delta_l.is_some() {
        cfg.delta_l = a.delta_l;
    }
    if let Some(v) = a.nu_max {
        cfg.nu_max = v;
    }
    cfg.validate(a.g).map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn column_refs(cols: &[String]) -> Vec<&str> {
    cols.iter().map(String::as_str).collect()
}

fn run_fit(a: FitArgs) -> Result<(), Failure> {
    let cfg = trainer_config(&a)?;
    let loaded = load_csv::<f64>(&a.data, &column_refs(&a.cols))?;
    match fit(&loaded.data, a.g, &cfg) {
        Ok(outcome) => {
            if let Some(path) = &a.trace {
                write_trace(&outcome.trace, path)?;
            }
            let meta = FitMetadata::from_fit(&cfg, &outcome)?;
            save_model(&ModelDocument::from_model(&outcome.model, Some(meta)), &a.out)?;
            Ok(())
        }
        Err(failure) => {
            if let (Some(path), false) = (&a.trace, failure.trace.is_empty()) {
                write_trace(&failure.trace, path)?;
            }
            Err(failure.error.into())
        }
    }
}

fn run_eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let model = load_model(&a.model)?.to_model::<f64>()?;
    let loaded = load_csv::<f64>(&a.data, &column_refs(&a.cols))?;
    let weighted = weighted_log_densities(&loaded.data, &model, DEFAULT_DENSITY_SEED)?;
    let ll = log_likelihood_from(&weighted)?;
    let labels = classify_from(&responsibilities_from(&weighted)?);
    let mut text = format!("loglik,{ll}\nrow,label\n");
    for (j, l) in labels.iter().enumerate() {
        text.push_str(&format!("{},{}\n", j + 1, l + 1));
    }
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::from(Error::Io {
            path: "<stdout>".into(),
            message: e.to_string(),
        }))
}

fn run_sample(a: SampleArgs) -> Result<(), Failure> {
    if a.n == 0 {
        return Err(usage("-n must be at least 1"));
    }
    let model = load_model(&a.model)?.to_model::<f64>()?;
    let (data, labels) = sample_mixture(&model, a.n, a.seed)?;
    let header: Vec<String> = (1..=data.p()).map(|k| format!("y{k}")).collect();
    let labels: Vec<usize> = labels.iter().map(|l| l + 1).collect();
    write_csv(&a.out, &header, &data, Some(("component", &labels)))?;
    Ok(())
}

fn run_synth(a: SynthArgs) -> Result<(), Failure> {
    let spec = match (&a.spec, a.seed) {
        (Some(path), _) => read_spec(path)?,
        (None, Some(seed)) => SyntheticSpec::with_seed(seed),
        (None, None) => return Err(usage("one of --spec or --seed is required")),
    };
    let (data, labels) = generate_synthetic(&spec)?;
    let labels: Vec<usize> = labels.iter().map(|l| l + 1).collect();
    write_csv(&a.out, &["x".to_string(), "y".to_string()], &data, Some(("label", &labels)))?;
    Ok(())
}

fn read_spec(path: &Path) -> Result<SyntheticSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())).into())
}
