use std::path::PathBuf;
use std::process::ExitCode;

use ambisense::EvalMode;
use ambisense_cli::commands::{self, Context};
use ambisense_cli::{CliError, RunConfig};
use anyhow::Result;
use clap::{Parser, Subcommand};

/// Train, compile and simulate the ambipolar-transistor one-vs-one MNIST
/// classifier.
#[derive(Debug, Parser)]
#[command(name = "ambisense", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (`output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory with the four MNIST IDX files (`data.dir`).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Split shuffle seed (`seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluation mode: digital-float, digital-quantized or analog (`eval.mode`).
    #[arg(long, global = true)]
    mode: Option<EvalMode>,
    /// Evaluate only the first N test digits (`eval.subset`).
    #[arg(long, global = true)]
    subset: Option<usize>,
    /// Override any config key, e.g. `--set sbs.tolerance=0.005`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, split and downsample MNIST; write a dataset summary.
    Prepare,
    /// Train the 45 pairwise classifiers on all features.
    Train,
    /// Backward feature selection per pair and retraining.
    Select,
    /// Map the selected model's weights to gate-bias levels.
    Quantize,
    /// Assemble the device array and write its netlist.
    Build,
    /// Evaluate and export vote tallies and sensing-line traces.
    Simulate,
    /// Evaluate the test set and write metrics and a confusion matrix.
    Evaluate,
    /// Summarize the run directory in report.md.
    Report,
    /// Every step above, evaluating in all three modes.
    RunAll,
    /// Print the resolved configuration as JSON.
    ShowConfig,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(dir) = &cli.data_dir {
        cfg.data.dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.eval.mode = mode;
    }
    if cli.subset.is_some() {
        cfg.eval.subset = cli.subset;
    }
    cfg.with_overrides(&cli.overrides)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    let ctx = Context::new(cfg)?;
    let mode = ctx.cfg.eval.mode;
    match cli.command {
        Command::Prepare => drop(commands::prepare(&ctx)?),
        Command::Train => drop(commands::train(&ctx)?),
        Command::Select => drop(commands::select(&ctx)?),
        Command::Quantize => drop(commands::quantize(&ctx)?),
        Command::Build => drop(commands::build(&ctx)?),
        Command::Simulate => drop(commands::simulate(&ctx, mode)?),
        Command::Evaluate => drop(commands::evaluate(&ctx, mode)?),
        Command::Report => drop(commands::report(&ctx)?),
        Command::RunAll => commands::run_all(&ctx)?,
        Command::ShowConfig => println!("{}", serde_json::to_string_pretty(&ctx.cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
