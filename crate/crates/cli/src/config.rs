//! Experiment configuration: one JSON file pins the world, the model, the
//! training recipe, and the evaluation knobs, so a full run is reproducible
//! from the file alone.
//!
//! Every section tolerates omitted fields (defaults fill in) but rejects
//! unknown ones, so typos fail loudly instead of silently running defaults.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use biscuit_core::eval::EvalOptions;
use biscuit_core::model::ModelConfig;
use biscuit_core::scm::{RuleKind, ScmConfig};
use biscuit_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// World seed. The SCM draw, every dataset, and graph discovery derive
    /// from it; the training seed lives in `train` (or `--seed`).
    pub seed: u64,
    pub scm: ScmSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            scm: ScmSection::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

/// [`ScmConfig`] plus the training rollout length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmSection {
    /// Training rollout length in frames.
    pub frames: usize,
    pub k: usize,
    pub rule: RuleKind,
    pub edge_prob: f64,
    pub noise_std: f64,
    pub touch_radius: f64,
    pub mech_hidden: usize,
    pub entangle: bool,
    pub cell_assignment: Option<Vec<usize>>,
}

impl Default for ScmSection {
    fn default() -> Self {
        let base = ScmConfig::default();
        ScmSection {
            frames: 50_000,
            k: base.k,
            rule: base.rule,
            edge_prob: base.edge_prob,
            noise_std: base.noise_std,
            touch_radius: base.touch_radius,
            mech_hidden: base.mech_hidden,
            entangle: base.entangle,
            cell_assignment: base.cell_assignment,
        }
    }
}

impl ScmSection {
    pub fn scm_config(&self) -> ScmConfig {
        ScmConfig {
            k: self.k,
            rule: self.rule,
            edge_prob: self.edge_prob,
            noise_std: self.noise_std,
            touch_radius: self.touch_radius,
            mech_hidden: self.mech_hidden,
            entangle: self.entangle,
            cell_assignment: self.cell_assignment.clone(),
        }
    }
}

/// Held-out data size plus the metric thresholds of [`EvalOptions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Frames in each held-out dataset (one iid, one rollout).
    pub frames: usize,
    pub knn_neighbors: usize,
    pub dead_latent_variance: f64,
    pub gate_fraction: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let opts = EvalOptions::default();
        EvalSection {
            frames: 25_000,
            knn_neighbors: opts.knn_neighbors,
            dead_latent_variance: opts.dead_latent_variance,
            gate_fraction: opts.gate_fraction,
        }
    }
}

impl EvalSection {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            knn_neighbors: self.knn_neighbors,
            dead_latent_variance: self.dead_latent_variance,
            gate_fraction: self.gate_fraction,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scm.scm_config().validate()?;
        self.train.validate()?;
        if self.scm.frames < 2 {
            bail!("scm.frames must be ≥ 2 (training needs transitions)");
        }
        if self.eval.frames < 200 {
            bail!("eval.frames must be ≥ 200 (the R² regression splits the held-out set in half)");
        }
        let m = self.model.resolve_latents(self.scm.k);
        if m < self.scm.k {
            bail!("model.latents = {m} cannot represent {} causal variables", self.scm.k);
        }
        if self.eval.knn_neighbors == 0 {
            bail!("eval.knn_neighbors must be ≥ 1");
        }
        if !self.eval.dead_latent_variance.is_finite() || self.eval.dead_latent_variance < 0.0 {
            bail!("eval.dead_latent_variance must be finite and ≥ 0");
        }
        if !(self.eval.gate_fraction > 0.0 && self.eval.gate_fraction < 1.0) {
            bail!("eval.gate_fraction must lie strictly between 0 and 1");
        }
        Ok(())
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    config
        .validate()
        .with_context(|| format!("invalid config {}", path.display()))?;
    Ok(config)
}

/// Writes the fully resolved config (defaults filled in), so downstream
/// commands never depend on defaults drifting.
pub fn save(path: &Path, config: &ExperimentConfig) -> Result<()> {
    let mut text = serde_json::to_string_pretty(config)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
