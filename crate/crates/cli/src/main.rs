mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{cmd_compare, cmd_run, cmd_sweep};

/// Federated learning simulator with projection-based server aggregation.
///
/// Worker threads per round default to the available parallelism and can be
/// overridden with FEDDPC_WORKERS.
#[derive(Parser)]
#[command(name = "feddpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set strategy.lambda=2`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run several experiments on identical data and write comparison.csv.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Directory for comparison.csv (default: first config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid search over lambda and the learning rate (used on both client
    /// and server) and write sweep.csv.
    Sweep {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Comma-separated lambda values, e.g. `3,2,1,0.1,0,-0.1,-0.5`.
        #[arg(long, allow_hyphen_values = true)]
        lambda_grid: Option<String>,
        /// Comma-separated learning rates.
        #[arg(long)]
        lr_grid: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config, overrides } => cmd_run(config, overrides),
        Command::Compare { configs, overrides, out } => cmd_compare(configs, overrides, out.as_deref()),
        Command::Sweep { config, overrides, lambda_grid, lr_grid } => {
            cmd_sweep(config, overrides, lambda_grid.as_deref(), lr_grid.as_deref())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Error chain joined by `: `, skipping links whose text the previous link
/// already ends with.
fn describe(err: &dyn std::error::Error) -> String {
    let mut msg = err.to_string();
    let mut source = err.source();
    while let Some(e) = source {
        let next = e.to_string();
        if !msg.ends_with(&next) {
            msg = format!("{msg}: {next}");
        }
        source = e.source();
    }
    msg
}
