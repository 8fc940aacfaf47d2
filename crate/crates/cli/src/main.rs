//! `snis`: data generation, training, evaluation, K-sweeps, gradient checks
//! and benchmarks for sampling-based language-model criteria.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "snis",
    version,
    about = "Sampling-based training criteria for language models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a config key; applied after the file, in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Shorthand for `--set seed=N`, applied last.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for every output file.
    #[arg(long, default_value = "out")]
    pub outdir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic task and its training and evaluation corpora.
    GenData(Common),
    /// Train a model and write its checkpoint and per-epoch metrics.
    Train(Common),
    /// Evaluate a checkpoint on the evaluation corpus.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<outdir>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train once per entry of `Ks` and write all metric rows.
    SweepK(Common),
    /// Compare analytic and finite-difference gradients.
    GradCheck(Common),
    /// Measure seconds per training batch.
    Bench(Common),
    /// Summarize a metrics CSV as a table sorted by criterion and K.
    Report {
        /// Metrics CSV written by `train` or `sweep-k`.
        csv: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(c) => commands::gen_data(&c),
        Command::Train(c) => commands::train(&c),
        Command::Eval { common, checkpoint } => commands::eval(&common, checkpoint),
        Command::SweepK(c) => commands::sweep_k(&c),
        Command::GradCheck(c) => commands::grad_check(&c),
        Command::Bench(c) => commands::bench(&c),
        Command::Report { csv } => report::run(&csv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
