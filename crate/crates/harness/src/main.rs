//! `gensm`: command-line front end for the experiment runners.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 1 I/O failure.

use clap::{Args, Parser, Subcommand};
use gensm_harness::manifest::RunManifest;
use gensm_harness::runner::{
    run_approx_accuracy, run_optimize_one, run_param_select, run_se_compare, to_csv,
};
use gensm_harness::spec::ExperimentSpec;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "gensm",
    version,
    about = "Spectral-efficiency experiments for GenSM-aided mmWave MIMO",
    after_help = "Each run writes CSV artifacts plus manifest.json into --out. \
Outputs are byte-reproducible from (config, seed); only the manifest's wall time varies."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form rate vs its Monte-Carlo reference across (n_r, SNR).
    ApproxAccuracy(RunArgs),
    /// Optimized precoders vs baselines and waterfilling across SNR.
    SeCompare(RunArgs),
    /// Average optimized rate of every (n_k, n_m) grouping per (n_r, SNR).
    ParamSelect(RunArgs),
    /// One channel, one optimization, every artifact (debug aid).
    OptimizeOne(RunArgs),
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::ApproxAccuracy(_) => "approx-accuracy",
            Cmd::SeCompare(_) => "se-compare",
            Cmd::ParamSelect(_) => "param-select",
            Cmd::OptimizeOne(_) => "optimize-one",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Cmd::ApproxAccuracy(a) | Cmd::SeCompare(a) | Cmd::ParamSelect(a)
            | Cmd::OptimizeOne(a) => a,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec; every flag below overrides its field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Channel realizations per grid point.
    #[arg(long)]
    channels: Option<usize>,
    /// Monte-Carlo samples per rate estimate.
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Comma-separated SNR grid in dB (write --snr-db=-10,-5,0 for negatives).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    /// Comma-separated receive-antenna counts; a single value also sets the
    /// base n_r used by se-compare and optimize-one.
    #[arg(long, value_delimiter = ',')]
    nr: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Gradient driving the optimizer: full or reduced.
    #[arg(long, value_parser = parse_gradient)]
    gradient: Option<gensm_core::GradientKind>,
    /// Random restarts per optimization.
    #[arg(long)]
    restarts: Option<usize>,
}

fn parse_gradient(s: &str) -> Result<gensm_core::GradientKind, String> {
    s.parse().map_err(|e: gensm_core::Error| e.to_string())
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<gensm_core::Error> for Failure {
    fn from(e: gensm_core::Error) -> Self {
        match e {
            gensm_core::Error::InvalidConfig(_) | gensm_core::Error::DimensionMismatch(_) => {
                Failure::Config(e.to_string())
            }
            gensm_core::Error::RankDeficient { .. } | gensm_core::Error::Numerical(_) => {
                Failure::Numerical(e.to_string())
            }
        }
    }
}

fn build_spec(args: &RunArgs) -> Result<ExperimentSpec, Failure> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(channels) = args.channels {
        spec.channels = channels;
    }
    if let Some(mc) = args.mc_samples {
        spec.mc_samples = mc;
    }
    if let Some(snr) = &args.snr_db {
        spec.snr_db = snr.clone();
    }
    if let Some(nr) = &args.nr {
        spec.nr = nr.clone();
        if let [single] = nr.as_slice() {
            spec.n_r = *single;
        }
    }
    if let Some(gradient) = args.gradient {
        spec.optimizer.gradient_kind = gradient;
    }
    if let Some(restarts) = args.restarts {
        spec.optimizer.restarts = restarts;
    }
    spec.validate()?;
    Ok(spec)
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<String, Failure> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(path.display().to_string())
}

fn run(cmd: &Cmd) -> Result<(), Failure> {
    let started = Instant::now();
    let args = cmd.args();
    let spec = build_spec(args)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", args.out.display())))?;

    let mut outputs = Vec::new();
    match cmd {
        Cmd::ApproxAccuracy(_) => {
            let rows = run_approx_accuracy(&spec)?;
            outputs.push(write_artifact(&args.out, "approx_accuracy.csv", &to_csv(&rows))?);
        }
        Cmd::SeCompare(_) => {
            let rows = run_se_compare(&spec)?;
            outputs.push(write_artifact(&args.out, "se_compare.csv", &to_csv(&rows))?);
        }
        Cmd::ParamSelect(_) => {
            let rows = run_param_select(&spec)?;
            outputs.push(write_artifact(&args.out, "param_select.csv", &to_csv(&rows))?);
        }
        Cmd::OptimizeOne(_) => {
            let artifacts = run_optimize_one(&spec)?;
            outputs.push(write_artifact(&args.out, "channel.json", &artifacts.channel_json)?);
            outputs.push(write_artifact(&args.out, "trace.json", &artifacts.trace_json)?);
            outputs.push(write_artifact(
                &args.out,
                "optimizer_summary.csv",
                &artifacts.summary_csv,
            )?);
            outputs.push(write_artifact(&args.out, "report.csv", &artifacts.report_csv)?);
        }
    }

    let manifest =
        RunManifest::new(cmd.name(), &spec, outputs, started.elapsed().as_secs_f64());
    write_artifact(&args.out, "manifest.json", &manifest.to_json()?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}
