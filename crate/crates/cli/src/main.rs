use anyhow::Context;
use cfisac::detection::DetectorKind;
use cfisac::optimizer::{Mode, OptimizerOptions};
use cfisac_cli::{parse_list, parse_sweep, run_experiment, ExperimentConfig, SweepSpec};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cfisac", version, about = "Cell-free ISAC energy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV files.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; missing fields fall back to the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "paper-default")]
    preset: String,
    /// `path=v1,v2,...` or `path=start:step:end`, e.g. `sensing.sinr_threshold_db=-4:2:10`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, default_value = "e2e_isac,tx_only_isac,e2e_no_sensing")]
    modes: String,
    #[arg(long, default_value = "clutter-aware,clutter-unaware")]
    detectors: String,
    #[arg(long, default_value_t = 1)]
    drops: usize,
    /// Experiment seed; defaults to the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Trials for threshold calibration and for detection each (0 skips detection).
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Monte Carlo realizations for the channel statistics.
    #[arg(long, default_value_t = 300)]
    moment_samples: usize,
    #[arg(long)]
    threads: Option<usize>,
    /// Start every sweep point from the default initialization.
    #[arg(long)]
    no_warm_start: bool,
    #[command(flatten)]
    optimizer: OptimizerArgs,
}

#[derive(Args)]
struct OptimizerArgs {
    #[arg(long, default_value_t = 30)]
    max_iterations: usize,
    /// Relative objective decrease that ends the outer iteration.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Slack level below which the sensing slack is dropped.
    #[arg(long, default_value_t = 1e-6)]
    epsilon_chi: f64,
    /// Slack penalty weight.
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-7)]
    tightness_tol: f64,
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let document = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => serde_json::json!({}),
    };
    let seed = match args.seed {
        Some(s) => s,
        None => document.get("master_seed").and_then(|v| v.as_u64()).unwrap_or(42),
    };
    let (parameter, values) = match &args.sweep {
        Some(text) => {
            let (p, v) = parse_sweep(text)?;
            (Some(p), v)
        }
        None => (None, Vec::new()),
    };
    let o = &args.optimizer;
    let cfg = ExperimentConfig {
        document,
        preset: args.preset.clone(),
        moment_samples: args.moment_samples,
        detection_trials: args.trials,
        optimizer: OptimizerOptions {
            epsilon: o.epsilon,
            epsilon_chi: o.epsilon_chi,
            lambda: o.lambda,
            max_iterations: o.max_iterations,
            tightness_tol: o.tightness_tol,
            ..OptimizerOptions::default()
        },
        warm_start: !args.no_warm_start,
        threads: args.threads.unwrap_or_else(|| ExperimentConfig::default().threads),
    };
    let spec = SweepSpec {
        parameter,
        values,
        modes: parse_list::<Mode>(&args.modes).context("--modes")?,
        detectors: parse_list::<DetectorKind>(&args.detectors).context("--detectors")?,
        n_drops: args.drops,
        seed,
    };
    let summary = run_experiment(&cfg, &spec, &args.out)?;
    let feasible = summary.records.iter().filter(|r| r.result.feasible).count();
    eprintln!("{} rows ({feasible} feasible)", summary.records.len());
    for f in &summary.files {
        eprintln!("wrote {}", f.display());
    }
    if summary.infeasible_points.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("no feasible row at sweep point(s) {:?}", summary.infeasible_points);
        Ok(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
