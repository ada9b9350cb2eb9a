//! `gprl`: run scenarios and sweeps, score embedding files, verify.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gprl::oracle::Fault;

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "gprl", version, about = "Multi-dimensional preference RL simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectory.csv and manifest.json.
    Scenario {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario once per value of one config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `key=v1,v2,...`
        #[arg(long)]
        sweep: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score an embedding file as one group.
    Score {
        /// File with a `# k=<int>` header and `id,v1,...,v2k` rows.
        embeddings: PathBuf,
        /// Comma-separated subspace weights; defaults to all ones.
        #[arg(long)]
        weights: Option<String>,
        #[arg(long, default_value_t = 1e-8)]
        epsilon: f64,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Corrupt the fast score path so the suite must fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scenario { config, out, seed } => commands::scenario(&config, &out, seed),
        Command::Sweep { config, sweep, out, seed } => commands::sweep(&config, &sweep, &out, seed),
        Command::Score { embeddings, weights, epsilon, out } => {
            commands::score(&embeddings, weights.as_deref(), epsilon, out.as_deref())
        }
        Command::Verify { seed, trials, inject_fault } => {
            commands::verify(seed, trials, if inject_fault { Fault::Scores } else { Fault::None })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
