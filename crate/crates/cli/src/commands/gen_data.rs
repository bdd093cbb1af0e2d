//! `gen-data`: build a world from a config and write its datasets.
//!
//! Layout of the output directory:
//!   train/            training rollout (`scm.frames` frames, substream 0)
//!   heldout-iid/      independently sampled states (`eval.frames`, substream 1)
//!   heldout-rollout/  a second, disjoint rollout (`eval.frames`, substream 1)
//!   config.json       the fully resolved experiment config
//!
//! Substream 0 is reserved for training data, so held-out sets can never
//! alias it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use biscuit_core::scm::{write_dataset, Dataset, InteractionRule, ScmWorld};
use clap::Args;

use crate::config;

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; must be empty unless --force.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

fn prepare_out_dir(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        let occupied = fs::read_dir(out)
            .with_context(|| format!("inspecting {}", out.display()))?
            .next()
            .is_some();
        if occupied {
            if !force {
                bail!(
                    "output directory {} is not empty (pass --force to replace it)",
                    out.display()
                );
            }
            fs::remove_dir_all(out)
                .with_context(|| format!("clearing {}", out.display()))?;
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(())
}

fn rule_summary(rule: &InteractionRule) -> String {
    match rule {
        InteractionRule::RoboticArm { .. } => "robotic-arm".into(),
        InteractionRule::MinimalCode { clusters, .. } => {
            format!("minimal-code({clusters} clusters)")
        }
    }
}

fn write_split(out: &Path, name: &str, data: &Dataset) -> Result<()> {
    write_dataset(data, &out.join(name))
        .with_context(|| format!("writing {name} dataset"))?;
    let mode = match data.manifest.mode {
        biscuit_core::scm::DatasetMode::Rollout => "rollout",
        biscuit_core::scm::DatasetMode::Iid => "iid",
    };
    println!("wrote {name} ({mode}, {} frames)", data.manifest.frames);
    Ok(())
}

pub fn run(args: &GenDataArgs) -> Result<()> {
    let config = config::load(&args.config)?;
    prepare_out_dir(&args.out, args.force)?;

    let world = ScmWorld::build(config.scm.scm_config(), config.seed)?;
    println!(
        "world: k={}, rule={}, seed={}",
        config.scm.k,
        rule_summary(world.rule()),
        config.seed
    );

    write_split(&args.out, "train", &world.generate_rollout(config.scm.frames)?)?;
    write_split(
        &args.out,
        "heldout-iid",
        &world.generate_iid(config.eval.frames, 1)?,
    )?;
    write_split(
        &args.out,
        "heldout-rollout",
        &world.generate_rollout_sub(config.eval.frames, 1)?,
    )?;
    config::save(&args.out.join("config.json"), &config)?;
    Ok(())
}
