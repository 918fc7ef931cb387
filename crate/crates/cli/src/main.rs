//! `dmlfair` command-line tool.
//!
//! Exit codes: 0 success, 2 bad arguments or configuration, 3 data that does
//! not match the schema, 4 numerical failure.

mod bundle;
mod config;
mod evaluate;
mod explain;
mod predict;
mod simulate;
mod svg;
mod train;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dmlfair::Error;

#[derive(Parser, Debug)]
#[command(name = "dmlfair", version, about = "Counterfactually fair regression by double machine learning")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic hiring dataset and its latent draws.
    Simulate(simulate::SimulateArgs),
    /// Fit a fair model (and baselines) and save it.
    Train(train::TrainArgs),
    /// Score new rows with a saved model.
    Predict(predict::PredictArgs),
    /// Counterfactual error and group statistics against simulated ground truth.
    Evaluate(evaluate::EvaluateArgs),
    /// Fit a surrogate tree explaining how the fair model adjusts predictions.
    Explain(explain::ExplainArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Schema(_) | Error::Parse { .. } | Error::UnseenLevel { .. } => 3,
        Error::Singular(_) => 4,
        Error::Input(_) | Error::Format { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Train(a) => train::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Explain(a) => explain::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
