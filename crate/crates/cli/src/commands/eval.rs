//! `eval`: score a trained run — or the ground-truth oracle — on the
//! held-out datasets, writing a metrics JSON and the full R² matrix CSV.
//!
//! The oracle path inverts the observation map analytically and feeds the
//! true interaction indicators through the same metric assembly, which puts
//! a ceiling on every score a trained model is judged against.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use biscuit_core::error::CoreError;
use biscuit_core::eval::{
    evaluate_biscuit_with, evaluate_encoded, evaluate_nf_with, write_metrics_json, write_r2_csv,
    MetricsReport, R2Matrix,
};
use biscuit_core::model::checkpoint::{self, ModelKind};
use biscuit_core::model::nf::NfModel;
use biscuit_core::model::BiscuitModel;
use biscuit_core::scm::{Dataset, ScmWorld};
use clap::Args;

use crate::config;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory holding final.ckpt (omit with --oracle).
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Dataset directory produced by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the metrics JSON; the R² CSV lands next to it.
    #[arg(long)]
    pub report: PathBuf,
    /// Score the inverse observation map instead of a trained run.
    #[arg(long)]
    pub oracle: bool,
    /// Config path (default: <data>/config.json).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// The assignment error for zero informative latents means the encoder
/// collapsed; say so instead of leaving the user to decode the metric's
/// vocabulary.
fn diagnose(err: CoreError) -> anyhow::Error {
    let text = err.to_string();
    if text.contains("informative latents") {
        anyhow!(err).context(
            "the encoder collapsed: no latent carries held-out variance above the dead-latent \
             threshold, so no alignment exists",
        )
    } else {
        anyhow!(err)
    }
}

/// Ground-truth encoder: invert the observation map row by row.
fn invert_observations(world: &ScmWorld, data: &Dataset) -> Result<Vec<f64>> {
    let k = data.manifest.k;
    let mut out = Vec::with_capacity(data.x.len());
    for t in 0..data.manifest.frames {
        let row: Vec<f64> = data.x[t * k..(t + 1) * k]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        out.extend(world.entangler().inverse(&row)?);
    }
    Ok(out)
}

pub fn run(args: &EvalArgs) -> Result<()> {
    if args.oracle == args.run.is_some() {
        bail!("pass exactly one of --run or --oracle");
    }
    let config_path = args
        .config
        .clone()
        .unwrap_or_else(|| args.data.join("config.json"));
    let config = config::load(&config_path)?;
    let opts = config.eval.options();
    let iid = read_split(&args.data, "heldout-iid")?;
    let rollout = read_split(&args.data, "heldout-rollout")?;

    let (report, r2): (MetricsReport, R2Matrix) = if args.oracle {
        let world = ScmWorld::from_manifest(&iid.manifest)?;
        let k = iid.manifest.k;
        let iid_latents = invert_observations(&world, &iid)?;
        let roll_latents = invert_observations(&world, &rollout)?;
        let truth: Vec<u8> = rollout.i[k..].iter().map(|&v| (v != 0.0) as u8).collect();
        evaluate_encoded(
            &iid_latents,
            &roll_latents,
            k,
            &truth,
            &iid,
            &rollout,
            config.seed,
            &opts,
        )
        .map_err(diagnose)?
    } else {
        let ckpt = args.run.as_ref().expect("checked above").join("final.ckpt");
        let (store, meta) = checkpoint::load(&ckpt)
            .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
        match meta.kind {
            ModelKind::Biscuit => {
                let model = BiscuitModel::attach(meta.obs_dim, &meta.config)?;
                evaluate_biscuit_with(&model, &store, &iid, &rollout, config.seed, &opts)
                    .map_err(diagnose)?
            }
            ModelKind::Nf => {
                let model = NfModel::attach(meta.obs_dim, &meta.config, meta.ae_trained)?;
                evaluate_nf_with(&model, &store, &iid, &rollout, config.seed, &opts)
                    .map_err(diagnose)?
            }
        }
    };

    write_metrics_json(&args.report, &report)?;
    write_r2_csv(&args.report.with_extension("r2.csv"), &r2)?;
    println!(
        "r2_diag={:.4} r2_sep={:.4} spearman_diag={:.4} f1_mean={:.4} shd={}",
        report.r2_diag,
        report.r2_sep,
        report.spearman_diag,
        report.interaction_f1_mean,
        report.shd
    );
    Ok(())
}

fn read_split(data: &std::path::Path, name: &str) -> Result<Dataset> {
    biscuit_core::scm::read_dataset(&data.join(name))
        .with_context(|| format!("reading {name} under {}", data.display()))
}
