mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig};

/// Kernel analyses of data with missing responses.
#[derive(Debug, Parser)]
#[command(name = "rkhs-missing", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Worker threads for the parallel stages.
    #[arg(long, global = true, env = "RKHS_MISSING_THREADS")]
    threads: Option<usize>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known truth.
    Simulate,
    /// Fit the observation model and write inverse-probability weights.
    Propensity,
    /// Weighted HSIC independence tests, per covariate and jointly.
    HsicTest,
    /// Gradient-based variable selection.
    Select,
    /// Fit kernel ridge regression.
    Fit,
    /// Predict with a saved model.
    Predict,
    /// Weighted split-conformal prediction intervals.
    Conformal,
    /// Collect earlier outputs into plot-ready tables.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Propensity => "propensity",
            Command::HsicTest => "hsic-test",
            Command::Select => "select",
            Command::Fit => "fit",
            Command::Predict => "predict",
            Command::Conformal => "conformal",
            Command::Report => "report",
        }
    }
}

fn load_config(cli: &Cli) -> Result<commands::Context, ConfigError> {
    let path = cli.config.as_ref().ok_or_else(|| ConfigError {
        field: "--config".into(),
        message: "a run configuration is required".into(),
    })?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate(cli.command.name())?;
    let output = match (&cli.output, &cfg.output) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => cfg.resolve(dir),
        (None, None) => {
            return Err(ConfigError { field: "output".into(), message: "set `output` or pass --output".into() })
        }
    };
    Ok(commands::Context { cfg, output, seed_overridden: cli.seed.is_some() })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = match load_config(&cli) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command.name(), &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
