//! Deterministic training loops over dataset triplets.
//!
//! Everything an epoch does is a pure function of (seed, epoch, checkpoint
//! state): shuffling and reparameterization noise come from streams keyed by
//! epoch, Adam moments live in the checkpoint, and τ is a function of the
//! epoch — so training resumed from a checkpoint is bit-identical to an
//! uninterrupted run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::checkpoint::{self, CheckpointMeta, ModelKind};
use crate::model::nf::NfModel;
use crate::model::{BiscuitModel, LossParts, ModelConfig, TemperatureSchedule};
use crate::rng::RngStream;
use crate::scm::Dataset;
use crate::tensor::{backward, ParamStore, Tensor};

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;
/// A checkpoint is written every this many epochs, plus one at the end.
pub const CHECKPOINT_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub regularizer_weight: f64,
    /// None: anneal over exactly `epochs` epochs.
    pub schedule: Option<TemperatureSchedule>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 4e-4,
            batch_size: 256,
            epochs: 100,
            seed: 0,
            regularizer_weight: 5e-4,
            schedule: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(CoreError::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(CoreError::invalid("batch_size must be positive"));
        }
        if self.epochs == 0 {
            return Err(CoreError::invalid("epochs must be ≥ 1"));
        }
        if self.regularizer_weight < 0.0 {
            return Err(CoreError::invalid("regularizer_weight must be ≥ 0"));
        }
        Ok(())
    }

    pub fn resolved_schedule(&self) -> TemperatureSchedule {
        self.schedule
            .unwrap_or_else(|| TemperatureSchedule::with_epochs(self.epochs))
    }
}

/// Batch-size-weighted means of the loss parts over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub kl: f64,
    pub recon: f64,
    pub reg: f64,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub history: Vec<EpochStats>,
    /// Stage-1 history for the two-stage variant; None for the VAE.
    pub ae_history: Option<Vec<EpochStats>>,
}

/// `epoch, loss, kl_term, recon_term, reg_term` per line.
pub fn write_loss_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,loss,kl_term,recon_term,reg_term\n");
    for s in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.epoch, s.loss, s.kl, s.recon, s.reg
        ));
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Where epoch `done` (1-based count of completed epochs) checkpoints to.
pub fn checkpoint_path(dir: &Path, done: usize, total: usize) -> PathBuf {
    if done == total {
        dir.join("final.ckpt")
    } else {
        dir.join(format!("epoch_{done:04}.ckpt"))
    }
}

fn should_checkpoint(done: usize, total: usize) -> bool {
    done == total || done % CHECKPOINT_EVERY == 0
}

/// Rows `lo..hi` of per-frame data as an f64 tensor.
fn gather(rows: &[usize], pick: impl Fn(usize) -> Vec<f64>, cols: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(rows.len() * cols);
    for &t in rows {
        data.extend(pick(t));
    }
    Tensor::from_vec(data, vec![rows.len(), cols])
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Sliding-window triplet indices (stride 1): t = 1..frames indexes the
/// (x^{t−1}, x^t, R^t) triplet.
fn triplet_indices(data: &Dataset) -> Result<Vec<usize>> {
    let frames = data.manifest.frames;
    if frames < 2 {
        return Err(CoreError::invalid(format!(
            "training needs ≥ 2 frames, dataset has {frames}"
        )));
    }
    Ok((1..frames).collect())
}

fn non_finite_guard(parts: &LossParts, epoch: usize, batch: usize) -> Result<()> {
    if !parts.total.item().is_finite() {
        return Err(CoreError::Diverged { epoch, batch });
    }
    Ok(())
}

struct EpochAccumulator {
    loss: f64,
    kl: f64,
    recon: f64,
    reg: f64,
    n: usize,
}

impl EpochAccumulator {
    fn new() -> Self {
        EpochAccumulator {
            loss: 0.0,
            kl: 0.0,
            recon: 0.0,
            reg: 0.0,
            n: 0,
        }
    }

    fn add(&mut self, parts: &LossParts, batch_len: usize) {
        let w = batch_len as f64;
        self.loss += parts.total.item() * w;
        self.kl += parts.kl * w;
        self.recon += parts.recon * w;
        self.reg += parts.reg * w;
        self.n += batch_len;
    }

    fn stats(&self, epoch: usize) -> EpochStats {
        let n = self.n as f64;
        EpochStats {
            epoch,
            loss: self.loss / n,
            kl: self.kl / n,
            recon: self.recon / n,
            reg: self.reg / n,
        }
    }
}

/// Train the VAE from scratch.
pub fn train_biscuit(
    store: &mut ParamStore,
    model: &BiscuitModel,
    model_config: &ModelConfig,
    data: &Dataset,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutput> {
    train_biscuit_from(store, model, model_config, data, config, 0, out_dir)
}

/// Continue the VAE from `start_epoch` completed epochs (checkpoint resume).
pub fn train_biscuit_from(
    store: &mut ParamStore,
    model: &BiscuitModel,
    model_config: &ModelConfig,
    data: &Dataset,
    config: &TrainConfig,
    start_epoch: usize,
    out_dir: Option<&Path>,
) -> Result<TrainOutput> {
    config.validate()?;
    if data.manifest.obs_dim != model.obs_dim() {
        return Err(CoreError::invalid(format!(
            "dataset observation dimension {} does not match the model's {}",
            data.manifest.obs_dim,
            model.obs_dim()
        )));
    }
    let schedule = config.resolved_schedule();
    let indices = triplet_indices(data)?;
    let root = RngStream::new(config.seed);
    let k = data.manifest.obs_dim;
    let mut history = Vec::with_capacity(config.epochs.saturating_sub(start_epoch));

    for epoch in start_epoch..config.epochs {
        let tau = schedule.tau(epoch);
        let mut order = indices.clone();
        root.split("shuffle", epoch as u64).shuffle(&mut order);
        let mut noise = root.split("noise", epoch as u64);
        let mut acc = EpochAccumulator::new();

        for (batch_idx, rows) in order.chunks(config.batch_size).enumerate() {
            let x_prev = gather(rows, |t| widen(data.x_row(t - 1)), k)?;
            let x_t = gather(rows, |t| widen(data.x_row(t)), k)?;
            let r = gather(rows, |t| widen(data.r_row(t)), 2)?;
            let parts = model.elbo_loss(
                store,
                &x_prev,
                &x_t,
                &r,
                tau,
                config.regularizer_weight,
                &mut noise,
            )?;
            non_finite_guard(&parts, epoch, batch_idx)?;
            let mut grads = backward(&parts.total)?;
            store.adam_step(&mut grads, config.learning_rate, ADAM_BETAS, ADAM_EPS)?;
            acc.add(&parts, rows.len());
        }
        history.push(acc.stats(epoch));

        let done = epoch + 1;
        if let Some(dir) = out_dir {
            if should_checkpoint(done, config.epochs) {
                let meta = CheckpointMeta {
                    kind: ModelKind::Biscuit,
                    obs_dim: model.obs_dim(),
                    config: model_config.clone(),
                    epoch: done,
                    tau,
                    ae_trained: false,
                };
                checkpoint::save(&checkpoint_path(dir, done, config.epochs), store, &meta)?;
            }
        }
    }
    Ok(TrainOutput {
        history,
        ae_history: None,
    })
}

/// Two-stage variant: autoencoder epochs first (stage 1), then the flow and
/// prior are trained with the autoencoder frozen (stage 2). Each stage runs
/// `config.epochs` epochs; checkpoints cover stage 2.
pub fn train_nf(
    store: &mut ParamStore,
    model: &mut NfModel,
    model_config: &ModelConfig,
    data: &Dataset,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutput> {
    config.validate()?;
    if data.manifest.obs_dim != model.obs_dim() {
        return Err(CoreError::invalid(format!(
            "dataset observation dimension {} does not match the model's {}",
            data.manifest.obs_dim,
            model.obs_dim()
        )));
    }
    let k = data.manifest.obs_dim;
    let root = RngStream::new(config.seed);
    let frames: Vec<usize> = (0..data.manifest.frames).collect();
    if frames.len() < 2 {
        return Err(CoreError::invalid("training needs ≥ 2 frames"));
    }

    // Stage 1: autoencoder on single observations.
    let mut ae_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order = frames.clone();
        root.split("ae-shuffle", epoch as u64).shuffle(&mut order);
        let mut noise = root.split("ae-noise", epoch as u64);
        let mut acc = EpochAccumulator::new();
        for (batch_idx, rows) in order.chunks(config.batch_size).enumerate() {
            let x = gather(rows, |t| widen(data.x_row(t)), k)?;
            let parts = model.ae_loss(store, &x, &mut noise)?;
            non_finite_guard(&parts, epoch, batch_idx)?;
            let mut grads = backward(&parts.total)?;
            store.adam_step_where(
                &mut grads,
                config.learning_rate,
                ADAM_BETAS,
                ADAM_EPS,
                |p| p.starts_with("ae."),
            )?;
            acc.add(&parts, rows.len());
        }
        ae_history.push(acc.stats(epoch));
    }
    model.set_ae_trained();

    // Stage 2: flow + prior on triplets, autoencoder frozen.
    let schedule = config.resolved_schedule();
    let indices = triplet_indices(data)?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let tau = schedule.tau(epoch);
        let mut order = indices.clone();
        root.split("shuffle", epoch as u64).shuffle(&mut order);
        let mut acc = EpochAccumulator::new();
        for (batch_idx, rows) in order.chunks(config.batch_size).enumerate() {
            let x_prev = gather(rows, |t| widen(data.x_row(t - 1)), k)?;
            let x_t = gather(rows, |t| widen(data.x_row(t)), k)?;
            let r = gather(rows, |t| widen(data.r_row(t)), 2)?;
            let parts =
                model.flow_train_loss(store, &x_prev, &x_t, &r, tau, config.regularizer_weight)?;
            non_finite_guard(&parts, epoch, batch_idx)?;
            let mut grads = backward(&parts.total)?;
            store.adam_step_where(
                &mut grads,
                config.learning_rate,
                ADAM_BETAS,
                ADAM_EPS,
                |p| !p.starts_with("ae."),
            )?;
            acc.add(&parts, rows.len());
        }
        history.push(acc.stats(epoch));

        let done = epoch + 1;
        if let Some(dir) = out_dir {
            if should_checkpoint(done, config.epochs) {
                let meta = CheckpointMeta {
                    kind: ModelKind::Nf,
                    obs_dim: model.obs_dim(),
                    config: model_config.clone(),
                    epoch: done,
                    tau,
                    ae_trained: true,
                };
                checkpoint::save(&checkpoint_path(dir, done, config.epochs), store, &meta)?;
            }
        }
    }
    Ok(TrainOutput {
        history,
        ae_history: Some(ae_history),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{ScmConfig, ScmWorld};

    fn desk_dataset(seed: u64, frames: usize) -> Dataset {
        let config = ScmConfig {
            k: 2,
            ..ScmConfig::default()
        };
        ScmWorld::build(config, seed)
            .unwrap()
            .generate_rollout(frames)
            .unwrap()
    }

    fn desk_model_config() -> ModelConfig {
        ModelConfig {
            latents: Some(4),
            enc_hidden: 16,
            prior_hidden: 8,
            flow_hidden: 8,
            ..ModelConfig::default()
        }
    }

    fn desk_train_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    fn fresh(seed: u64) -> (ParamStore, BiscuitModel) {
        let mut store = ParamStore::new();
        let model = BiscuitModel::init(
            &mut store,
            2,
            &desk_model_config(),
            &RngStream::new(seed).split("model", 0),
        )
        .unwrap();
        (store, model)
    }

    #[test]
    fn zero_epochs_is_rejected() {
        let data = desk_dataset(1, 64);
        let (mut store, model) = fresh(2);
        let config = desk_train_config(0);
        let err = train_biscuit(&mut store, &model, &desk_model_config(), &data, &config, None)
            .unwrap_err();
        assert!(err.to_string().contains("epochs"));
    }

    #[test]
    fn single_frame_dataset_is_rejected() {
        let data = desk_dataset(1, 1);
        let (mut store, model) = fresh(2);
        let config = desk_train_config(1);
        let err = train_biscuit(&mut store, &model, &desk_model_config(), &data, &config, None)
            .unwrap_err();
        assert!(err.to_string().contains("frames"));
    }

    #[test]
    fn history_length_equals_epochs_and_loss_decreases() {
        let data = desk_dataset(3, 256);
        let (mut store, model) = fresh(4);
        let config = desk_train_config(8);
        let out = train_biscuit(&mut store, &model, &desk_model_config(), &data, &config, None)
            .unwrap();
        assert_eq!(out.history.len(), 8);
        assert!(out.ae_history.is_none());
        for (e, s) in out.history.iter().enumerate() {
            assert_eq!(s.epoch, e);
            assert!(s.loss.is_finite());
        }
        assert!(
            out.history.last().unwrap().loss < out.history[0].loss,
            "loss did not improve: {} → {}",
            out.history[0].loss,
            out.history.last().unwrap().loss
        );
    }

    #[test]
    fn same_seed_produces_identical_final_checkpoints() {
        let data = desk_dataset(5, 128);
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            let (mut store, model) = fresh(6);
            let config = desk_train_config(3);
            train_biscuit(
                &mut store,
                &model,
                &desk_model_config(),
                &data,
                &config,
                Some(dir.path()),
            )
            .unwrap();
            std::fs::read(dir.path().join("final.ckpt")).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resumed_training_is_bit_identical_to_uninterrupted() {
        let data = desk_dataset(7, 128);
        let config = desk_train_config(5);
        let mc = desk_model_config();

        let full_dir = tempfile::tempdir().unwrap();
        let (mut store, model) = fresh(8);
        let full = train_biscuit(&mut store, &model, &mc, &data, &config, Some(full_dir.path()))
            .unwrap();

        // Fresh run stopped after 2 epochs by checkpointing, then resumed.
        let part_dir = tempfile::tempdir().unwrap();
        let (mut store2, model2) = fresh(8);
        let mut short = config.clone();
        short.epochs = 2;
        // Schedule must still span the full run for τ to line up.
        short.schedule = Some(TemperatureSchedule::with_epochs(5));
        train_biscuit(&mut store2, &model2, &mc, &data, &short, Some(part_dir.path())).unwrap();

        let (mut resumed_store, meta) =
            checkpoint::load(&checkpoint_path(part_dir.path(), 2, 2)).unwrap();
        assert_eq!(meta.epoch, 2);
        let resumed_model = BiscuitModel::attach(meta.obs_dim, &meta.config).unwrap();
        let resume_dir = tempfile::tempdir().unwrap();
        let tail = train_biscuit_from(
            &mut resumed_store,
            &resumed_model,
            &meta.config,
            &data,
            &config,
            meta.epoch,
            Some(resume_dir.path()),
        )
        .unwrap();

        assert_eq!(tail.history, full.history[2..].to_vec());
        let a = std::fs::read(checkpoint_path(full_dir.path(), 5, 5)).unwrap();
        let b = std::fs::read(checkpoint_path(resume_dir.path(), 5, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_reports_epoch_and_batch() {
        let data = desk_dataset(9, 96);
        let (mut store, model) = fresh(10);
        let mut config = desk_train_config(3);
        // Adam's first update moves each weight by ≈ learning_rate. 1e40 keeps
        // every activation finite (the longest product chain is ~lr⁶) while
        // the reconstruction residual squares to ~lr¹², far past f64::MAX.
        config.learning_rate = 1e40;
        let err = train_biscuit(&mut store, &model, &desk_model_config(), &data, &config, None)
            .unwrap_err();
        match err {
            CoreError::Diverged { epoch, batch } => {
                assert_eq!(epoch, 0);
                assert!(batch >= 1, "first loss is computed pre-update");
            }
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn checkpoint_cadence_is_every_tenth_epoch_plus_final() {
        let data = desk_dataset(11, 96);
        let (mut store, model) = fresh(12);
        let mut config = desk_train_config(12);
        config.batch_size = 96;
        let dir = tempfile::tempdir().unwrap();
        train_biscuit(
            &mut store,
            &model,
            &desk_model_config(),
            &data,
            &config,
            Some(dir.path()),
        )
        .unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, vec!["epoch_0010.ckpt".to_string(), "final.ckpt".into()]);
    }

    #[test]
    fn loss_csv_round_trips_the_history() {
        let history = vec![
            EpochStats {
                epoch: 0,
                loss: 3.25,
                kl: 1.5,
                recon: 1.75,
                reg: 0.5,
            },
            EpochStats {
                epoch: 1,
                loss: 2.0,
                kl: 1.0,
                recon: 1.0,
                reg: 0.25,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_csv(&path, &history).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("epoch,loss,kl_term,recon_term,reg_term"));
        assert_eq!(lines.next(), Some("0,3.25,1.5,1.75,0.5"));
        assert_eq!(lines.next(), Some("1,2,1,1,0.25"));
    }

    #[test]
    fn nf_two_stage_runs_and_freezes_autoencoder_in_stage_two() {
        let data = desk_dataset(13, 128);
        let mut store = ParamStore::new();
        let mc = ModelConfig {
            nf: true,
            ..desk_model_config()
        };
        let mut model = NfModel::init(
            &mut store,
            2,
            &mc,
            &RngStream::new(14).split("model", 0),
        )
        .unwrap();
        let config = desk_train_config(2);
        let out = train_nf(&mut store, &mut model, &mc, &data, &config, None).unwrap();
        assert_eq!(out.history.len(), 2);
        assert_eq!(out.ae_history.as_ref().unwrap().len(), 2);
        assert!(model.ae_trained());

        // Stage 2 must not advance the autoencoder's Adam step counter past
        // the stage-1 count, while flow/prior parameters keep training.
        let ae_steps: Vec<u64> = store
            .entries()
            .filter(|(p, ..)| p.starts_with("ae."))
            .map(|(.., step)| step)
            .collect();
        let flow_steps: Vec<u64> = store
            .entries()
            .filter(|(p, ..)| p.starts_with("flow."))
            .map(|(.., step)| step)
            .collect();
        let batches_per_epoch = 128usize.div_ceil(config.batch_size) as u64;
        let triplet_batches = 127usize.div_ceil(config.batch_size) as u64;
        assert!(ae_steps.iter().all(|&s| s == 2 * batches_per_epoch));
        assert!(flow_steps.iter().all(|&s| s == 2 * triplet_batches));
    }
}
