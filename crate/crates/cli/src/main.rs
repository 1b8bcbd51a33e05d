//! `formation`: data generation, training, simulation, evaluation and plots.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error, 3 training finished without reaching the loss target.

mod commands;
mod config;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use formation_core::experiment::ExperimentKind;
use formation_core::policy::PolicyKind;

#[derive(Debug, Parser)]
#[command(name = "formation", version, about = "Leader-follower formation control experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed of every random draw in the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root; results go to <out>/<experiment>/.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Full-scale randomized experiment (100 training / 20 test instances).
    #[arg(long, global = true)]
    pub full: bool,
    /// exp1, exp2 or exp3.
    #[arg(long, short = 'e', global = true)]
    pub experiment: Option<ExperimentKind>,
    /// More logging (-v info, -vv debug).
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Oracle runs → one dataset file per agent.
    GenData,
    /// One network per agent from the datasets.
    Train {
        /// Dataset directory [default: <out>/<experiment>/data].
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Closed-loop runs of one policy.
    Simulate {
        /// Instance file; defaults to the experiment's evaluation instances.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Weight directory [default: <out>/<experiment>/weights].
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Every policy on every evaluation instance, with mean/std statistics.
    Evaluate {
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Comma-separated policies [default: adaptive,no_nn,non_adaptive].
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<PolicyKind>>,
    },
    /// SVG figures for a run directory.
    Plot {
        /// Run directory [default: <out>/<experiment>/runs].
        #[arg(long)]
        runs: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match commands::dispatch(&cli) {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::TargetUnmet) => {
            eprintln!("warning: loss target not reached; artifacts were written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if commands::is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
