//! `check-theory`: run the identifiability probes for a configured world
//! and print the verdicts as JSON.
//!
//! Besides the world-specific suite, the output includes the fixed rotation
//! oracle at 0, π/4, and π/2 — a reminder of which observation rotations
//! keep binary interaction variables descriptive.

use std::f64::consts::PI;
use std::path::PathBuf;

use anyhow::Result;
use biscuit_core::scm::ScmWorld;
use biscuit_core::theory::{gaussian_rotation_oracle, run_theory_suite, TheoryReport};
use clap::Args;
use serde::Serialize;

use crate::config;

#[derive(Debug, Args)]
pub struct CheckTheoryArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Serialize)]
struct RotationRow {
    theta: f64,
    axis_mean_counts: [usize; 2],
    binary_describable: bool,
}

#[derive(Debug, Serialize)]
struct TheoryOutput {
    k: usize,
    rule: String,
    theory: TheoryReport,
    rotation: Vec<RotationRow>,
}

pub fn run(args: &CheckTheoryArgs) -> Result<()> {
    let config = config::load(&args.config)?;
    let world = ScmWorld::build(config.scm.scm_config(), config.seed)?;
    let theory = run_theory_suite(&world)?;

    let rotation = [0.0, PI / 4.0, PI / 2.0]
        .into_iter()
        .map(|theta| {
            let oracle = gaussian_rotation_oracle(theta);
            RotationRow {
                theta,
                axis_mean_counts: oracle.axis_mean_counts,
                binary_describable: oracle.binary_describable,
            }
        })
        .collect();

    let output = TheoryOutput {
        k: config.scm.k,
        rule: config.scm.rule.to_string(),
        theory,
        rotation,
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}
