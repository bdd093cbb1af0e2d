//! Command-line front end: generate worlds, train models, score them, and
//! probe identifiability, all driven by one experiment config file.
//!
//! Exit codes: 0 success, 1 usage/config/IO errors, 2 numeric failures
//! (training divergence, non-finite values). `BISCUIT_THREADS` caps the
//! rayon worker pool before any work starts.

use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use biscuit_core::error::CoreError;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{check_theory, eval, gen_data, report, train};

#[derive(Debug, Parser)]
#[command(name = "biscuit", version, about = "Causal representation learning laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a world's training and held-out datasets.
    GenData(gen_data::GenDataArgs),
    /// Train a model on a generated dataset directory.
    Train(train::TrainArgs),
    /// Score a trained run (or the ground-truth oracle) on held-out data.
    Eval(eval::EvalArgs),
    /// Run the identifiability probes for a configured world.
    CheckTheory(check_theory::CheckTheoryArgs),
    /// Aggregate metrics JSON files into one comparison CSV.
    Report(report::ReportArgs),
}

/// Numeric failures get their own exit code so sweep scripts can tell a
/// diverged run from a misconfigured one.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::Diverged { .. } | CoreError::NonFinite { .. }) => 2,
        _ => 1,
    }
}

fn init_threads() -> Result<()> {
    let value = match std::env::var("BISCUIT_THREADS") {
        Ok(v) => v,
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => return Err(e).context("reading BISCUIT_THREADS"),
    };
    let threads: usize = match value.trim().parse().ok().filter(|&n| n > 0) {
        Some(n) => n,
        None => bail!("BISCUIT_THREADS must be a positive integer, got {value:?}"),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("initializing the thread pool")?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(args) => gen_data::run(args),
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
        Command::CheckTheory(args) => check_theory::run(args),
        Command::Report(args) => report::run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    let run = init_threads().and_then(|()| dispatch(&cli));
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("biscuit: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_failures_map_to_exit_code_two() {
        let diverged = anyhow::Error::from(CoreError::Diverged { epoch: 3, batch: 7 })
            .context("training failed");
        assert_eq!(exit_code(&diverged), 2);
        let nonfinite = anyhow::Error::from(CoreError::NonFinite {
            context: "loss".into(),
        });
        assert_eq!(exit_code(&nonfinite), 2);
    }

    #[test]
    fn config_and_io_failures_map_to_exit_code_one() {
        assert_eq!(exit_code(&anyhow::Error::from(CoreError::invalid("n"))), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("plain error")), 1);
    }

    #[test]
    fn cli_parses_every_subcommand() {
        Cli::try_parse_from(["biscuit", "gen-data", "--config", "c.json", "--out", "d"])
            .unwrap();
        Cli::try_parse_from(["biscuit", "train", "--data", "d", "--out", "r", "--seed", "3"])
            .unwrap();
        Cli::try_parse_from([
            "biscuit", "eval", "--data", "d", "--report", "m.json", "--oracle",
        ])
        .unwrap();
        Cli::try_parse_from(["biscuit", "check-theory", "--config", "c.json"]).unwrap();
        Cli::try_parse_from(["biscuit", "report", "--out", "x.csv", "a.json", "b.json"])
            .unwrap();
        assert!(Cli::try_parse_from(["biscuit", "report"]).is_err());
    }
}
