//! `train`: fit a model on a generated dataset directory.
//!
//! The run directory collects everything needed to audit or resume the run:
//! periodic checkpoints plus `final.ckpt`, the per-epoch loss history as
//! CSV (two histories for the two-stage flow), and the effective training
//! config with any `--seed` override applied.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use biscuit_core::model::nf::NfModel;
use biscuit_core::model::BiscuitModel;
use biscuit_core::rng::RngStream;
use biscuit_core::scm::read_dataset;
use biscuit_core::tensor::ParamStore;
use biscuit_core::train::{train_biscuit, train_nf, write_loss_csv, TrainOutput};
use clap::Args;

use crate::config;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory produced by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for checkpoints and logs.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the training seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train the two-stage flow variant regardless of the config.
    #[arg(long)]
    pub nf: bool,
    /// Config path (default: <data>/config.json).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let config_path = args
        .config
        .clone()
        .unwrap_or_else(|| args.data.join("config.json"));
    let config = config::load(&config_path)?;
    let dataset = read_dataset(&args.data.join("train"))
        .with_context(|| format!("reading training data under {}", args.data.display()))?;

    let mut train_config = config.train.clone();
    if let Some(seed) = args.seed {
        train_config.seed = seed;
    }
    let obs_dim = dataset.manifest.obs_dim;
    let init_rng = RngStream::new(train_config.seed).split("model", 0);
    let mut store = ParamStore::new();

    let two_stage = args.nf || config.model.nf;
    let output: TrainOutput = if two_stage {
        let mut model = NfModel::init(&mut store, obs_dim, &config.model, &init_rng)?;
        train_nf(
            &mut store,
            &mut model,
            &config.model,
            &dataset,
            &train_config,
            Some(&args.out),
        )?
    } else {
        let model = BiscuitModel::init(&mut store, obs_dim, &config.model, &init_rng)?;
        train_biscuit(
            &mut store,
            &model,
            &config.model,
            &dataset,
            &train_config,
            Some(&args.out),
        )?
    };

    write_loss_csv(&args.out.join("loss.csv"), &output.history)?;
    if let Some(ae) = &output.ae_history {
        write_loss_csv(&args.out.join("ae_loss.csv"), ae)?;
    }
    let mut text = serde_json::to_string_pretty(&train_config)?;
    text.push('\n');
    fs::write(args.out.join("train_config.json"), text)?;

    let last = output.history.last().expect("≥ 1 epoch is enforced");
    println!(
        "trained {} epochs ({}) — final loss {:.6}, checkpoint {}",
        output.history.len(),
        if two_stage { "two-stage flow" } else { "vae" },
        last.loss,
        args.out.join("final.ckpt").display()
    );
    Ok(())
}
