//! `sacl`: batch command-line surface over the library. Subcommands cover
//! dataset synthesis, multi-seed training, evaluation, attack sweeps, and
//! clustering analysis. Outputs are machine-first (JSON and CSV) with a
//! human summary on stdout, and every command drops a manifest recording
//! its configuration, seeds, and emitted files.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use sacl_core::Error;

#[derive(Parser)]
#[command(name = "sacl", version, about = "Train and probe conversation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic conversation dataset.
    Synth(commands::synth::SynthArgs),
    /// Train one model per seed and aggregate test scores.
    Train(commands::train::TrainArgs),
    /// Score a checkpoint on a data split.
    Eval(commands::eval::EvalArgs),
    /// Sweep attack budgets and record robustness curves.
    Attack(commands::attack::AttackArgs),
    /// Cluster learned representations and score the clustering.
    Cluster(commands::cluster::ClusterArgs),
}

/// Exit codes: 2 for configuration problems, 3 for missing or malformed
/// inputs, 4 for numerical failures. Clap's own usage errors also exit
/// with 2.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Data(_)
        | Error::Parse { .. }
        | Error::Checkpoint(_)
        | Error::Io(_)
        | Error::Json(_) => 3,
        _ => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Attack(args) => commands::attack::run(args),
        Command::Cluster(args) => commands::cluster::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {}", err);
        std::process::exit(exit_code(&err));
    }
}
