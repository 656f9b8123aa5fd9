use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use rhl_cli::commands;
use rhl_cli::config::ExperimentConfig;
use rhl_core::analytics::RhoConvention;
use rhl_core::rng::with_threads;

#[derive(Parser, Debug)]
#[command(name = "rhl", version, about = "Near-critical Hawkes and rough Volterra experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; omitted fields take the reference values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to RHL_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    convention: Option<Convention>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// C_rho table as CSV; exit 0 iff the reference cells are reproduced.
    CrhoTable,
    /// Kernel distances along the horizon sweep; exit 0 iff decreasing.
    KernelConverge,
    /// Hawkes replications at the configured horizon.
    SimulateHawkes,
    /// SVE ensemble, exact covariance and slope reports.
    SimulateSve,
    /// Monte Carlo Laplace functional against the Riccati prediction.
    RiccatiCheck,
    /// All acceptance criteria; exit 0 iff every one passes.
    Verify,
    /// Every CSV consumed by the figures.
    ReportData,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Convention {
    Linear,
    Sqrt,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(c) = cli.convention {
        cfg.convention = match c {
            Convention::Linear => RhoConvention::LinearInEll,
            Convention::Sqrt => RhoConvention::SqrtEll,
        };
    }
    let env = std::env::var("RHL_THREADS").ok().and_then(|v| v.parse().ok());
    cfg.threads = cli.threads.or(env).or(cfg.threads);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<bool> {
    match cmd {
        Command::CrhoTable => commands::crho_table(cfg),
        Command::KernelConverge => commands::kernel_converge(cfg),
        Command::SimulateHawkes => commands::simulate_hawkes_cmd(cfg),
        Command::SimulateSve => commands::simulate_sve(cfg),
        Command::RiccatiCheck => commands::riccati_check(cfg),
        Command::Verify => commands::verify(cfg).map(|(ok, _)| ok),
        Command::ReportData => commands::report_data(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = resolve(&cli).and_then(|cfg| with_threads(cfg.threads, || run(cli.command, &cfg)));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
