mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};

const THREADS_ENV: &str = "HDFUZZ_THREADS";

/// Train hyperdimensional image classifiers, fuzz them for adversarial
/// inputs and harden them by retraining.
#[derive(Parser, Debug)]
#[command(name = "hdfuzz", version)]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Shorthand for `--guided false`.
    #[arg(long, global = true)]
    unguided: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on the training split, evaluate on the test split, save the model.
    Train,
    /// Evaluate a saved model on the test split.
    Eval,
    /// Fuzz a slice of the test images and write reports.
    Fuzz,
    /// Harvest adversarials, retrain on half, re-attack with the other half.
    Defend,
    /// Tabulate campaign reports side by side.
    Report {
        /// Campaign report JSON files, one table column each.
        reports: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hdfuzz: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.overrides, cli.unguided)?;
    match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Fuzz => commands::fuzz(&cfg, &*stop_flag()?),
        Command::Defend => commands::defend(&cfg, &*stop_flag()?),
        Command::Report { reports } => commands::report(&cfg, &reports),
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Raised by Ctrl-C; long-running verbs stop scheduling work and flush what
/// they have.
fn stop_flag() -> CliResult<Arc<AtomicBool>> {
    let flag = Arc::new(AtomicBool::new(false));
    let handler = Arc::clone(&flag);
    ctrlc::set_handler(move || {
        if handler.swap(true, Ordering::SeqCst) {
            std::process::exit(CliError::INTERRUPTED.into());
        }
        log::warn!("interrupt received; finishing in-flight inputs (press again to abort)");
    })
    .map_err(|e| CliError::Runtime(format!("cannot install interrupt handler: {e}")))?;
    Ok(flag)
}
