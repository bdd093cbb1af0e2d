//! Ground-truth world: a dynamic Bayesian network over K causal variables
//! with binary interactions driven by a 2-D regime variable, observed through
//! a fixed invertible entangler.
//!
//! Everything here is frozen data-generating machinery — no learned
//! components. A world is fully determined by (config, seed); datasets carry
//! both so any consumer can rebuild the exact world.

pub mod dataset;
pub mod entangler;
pub mod graph;
pub mod interaction;
pub mod mechanism;

pub use dataset::{read_dataset, write_dataset, Dataset, DatasetMode, Manifest};
pub use entangler::Entangler;
pub use graph::{sample_graph, CausalGraph};
pub use interaction::{
    interactions_from_regime, min_regimes, minimal_pattern, sample_regime, InteractionRule,
    RuleKind,
};
pub use mechanism::{step, Mechanism};

use crate::error::{CoreError, Result};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmConfig {
    /// Number of causal variables (and observation dimension).
    pub k: usize,
    pub rule: RuleKind,
    pub edge_prob: f64,
    /// Transition noise standard deviation.
    pub noise_std: f64,
    pub touch_radius: f64,
    /// Hidden width of the ground-truth mechanism MLPs.
    pub mech_hidden: usize,
    /// When false the observation map is the identity (X == C), which makes
    /// representation quality directly inspectable.
    pub entangle: bool,
    /// Explicit variable→cell map for the robotic-arm rule; None samples a
    /// random bijection. Non-bijective maps are allowed for constructing
    /// degenerate worlds on purpose.
    pub cell_assignment: Option<Vec<usize>>,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig {
            k: 6,
            rule: RuleKind::RoboticArm,
            edge_prob: 0.4,
            noise_std: 0.4,
            touch_radius: interaction::TOUCH_RADIUS,
            mech_hidden: 32,
            entangle: true,
            cell_assignment: None,
        }
    }
}

impl ScmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(CoreError::invalid("k must be ≥ 2"));
        }
        if !(self.edge_prob > 0.0 && self.edge_prob < 1.0) {
            return Err(CoreError::invalid("edge_prob must lie in (0, 1)"));
        }
        if self.noise_std < 0.0 || !self.noise_std.is_finite() {
            return Err(CoreError::invalid("noise_std must be finite and ≥ 0"));
        }
        if !(self.touch_radius > 0.0 && self.touch_radius < 1.0) {
            return Err(CoreError::invalid("touch_radius must lie in (0, 1)"));
        }
        if self.mech_hidden == 0 {
            return Err(CoreError::invalid("mech_hidden must be ≥ 1"));
        }
        Ok(())
    }
}

/// A fully built data-generating world. Immutable after construction;
/// generation methods derive fresh RNG streams from the stored seed, so
/// repeated calls with the same arguments return identical data.
#[derive(Debug, Clone)]
pub struct ScmWorld {
    config: ScmConfig,
    seed: u64,
    graph: CausalGraph,
    mechanism: Mechanism,
    rule: InteractionRule,
    entangler: Entangler,
}

impl ScmWorld {
    pub fn build(config: ScmConfig, seed: u64) -> Result<ScmWorld> {
        config.validate()?;
        let root = RngStream::new(seed);
        let graph = sample_graph(config.k, config.edge_prob, &mut root.split("graph", 0))?;
        let mechanism = Mechanism::init(
            &graph,
            config.mech_hidden,
            config.noise_std,
            &root.split("mechanism", 0),
        )?;
        let rule = match config.rule {
            RuleKind::RoboticArm => InteractionRule::sample_robotic_arm(
                config.k,
                config.touch_radius,
                config.cell_assignment.clone(),
                &mut root.split("rule", 0),
            )?,
            RuleKind::MinimalCode => {
                InteractionRule::minimal_code(config.k, config.touch_radius)?
            }
        };
        let entangler = if config.entangle {
            Entangler::sample(config.k, &mut root.split("entangler", 0))?
        } else {
            Entangler::identity(config.k)?
        };
        Ok(ScmWorld {
            config,
            seed,
            graph,
            mechanism,
            rule,
            entangler,
        })
    }

    /// Rebuild the world a dataset came from and confirm the stored graph and
    /// rule match what the (config, seed) pair regenerates.
    pub fn from_manifest(m: &Manifest) -> Result<ScmWorld> {
        let world = ScmWorld::build(m.config.clone(), m.seed)?;
        if world.graph.rows() != m.graph_rows {
            return Err(CoreError::invalid(
                "manifest graph does not match the world rebuilt from (config, seed)",
            ));
        }
        if world.rule != m.rule {
            return Err(CoreError::invalid(
                "manifest rule does not match the world rebuilt from (config, seed)",
            ));
        }
        Ok(world)
    }

    pub fn config(&self) -> &ScmConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn mechanism(&self) -> &Mechanism {
        &self.mechanism
    }

    pub fn rule(&self) -> &InteractionRule {
        &self.rule
    }

    pub fn entangler(&self) -> &Entangler {
        &self.entangler
    }

    fn manifest(&self, mode: DatasetMode, substream: u64, frames: usize) -> Manifest {
        Manifest {
            format_version: dataset::FORMAT_VERSION,
            seed: self.seed,
            mode,
            substream,
            frames,
            k: self.config.k,
            obs_dim: self.config.k,
            config: self.config.clone(),
            graph_rows: self.graph.rows(),
            rule: self.rule.clone(),
        }
    }

    /// Sequential rollout: C⁰ ~ N(0, I); for t ≥ 1 draw R^t, compute I^t,
    /// step the dynamics, entangle. Frame 0 stores the observational sentinel
    /// regime (1.5, 1.5) and a zero interaction row.
    pub fn generate_rollout(&self, frames: usize) -> Result<Dataset> {
        self.generate_rollout_sub(frames, 0)
    }

    /// Rollout from an explicit substream: independent trajectories of the
    /// same world, e.g. a held-out rollout next to the training one.
    pub fn generate_rollout_sub(&self, frames: usize, substream: u64) -> Result<Dataset> {
        if frames < 1 {
            return Err(CoreError::invalid("frames must be ≥ 1"));
        }
        let k = self.config.k;
        let base = RngStream::new(self.seed).split("rollout", substream);
        let mut init_rng = base.split("init", 0);
        let mut regime_rng = base.split("regime", 0);

        let mut c = Vec::with_capacity(frames * k);
        let mut r = Vec::with_capacity(frames * 2);
        let mut i = Vec::with_capacity(frames * k);
        let mut x = Vec::with_capacity(frames * k);

        let mut state = init_rng.normal_vec(k);
        push_frame(&mut c, &mut r, &mut i, &mut x, &state, [1.5, 1.5], &vec![0; k], {
            let (xt, _) = self.entangler.forward(&state)?;
            xt
        });

        for t in 1..frames {
            let rt = sample_regime(&mut regime_rng);
            let it = interactions_from_regime(rt, Some(&state), &self.rule);
            state = step(
                &state,
                &it,
                &self.mechanism,
                &self.graph,
                &base.split("step", t as u64),
            );
            let (xt, _) = self.entangler.forward(&state)?;
            push_frame(&mut c, &mut r, &mut i, &mut x, &state, rt, &it, xt);
        }

        Ok(Dataset {
            manifest: self.manifest(DatasetMode::Rollout, substream, frames),
            c,
            r,
            i,
            x,
        })
    }

    /// Independent frames: C ~ N(0, I), R drawn fresh, I computed from R, X
    /// entangled. `substream` distinguishes multiple independent draws from
    /// the same world.
    pub fn generate_iid(&self, frames: usize, substream: u64) -> Result<Dataset> {
        if frames < 1 {
            return Err(CoreError::invalid("frames must be ≥ 1"));
        }
        let k = self.config.k;
        let base = RngStream::new(self.seed).split("iid", substream);
        let mut state_rng = base.split("state", 0);
        let mut regime_rng = base.split("regime", 0);

        let mut c = Vec::with_capacity(frames * k);
        let mut r = Vec::with_capacity(frames * 2);
        let mut i = Vec::with_capacity(frames * k);
        let mut x = Vec::with_capacity(frames * k);

        for _ in 0..frames {
            let state = state_rng.normal_vec(k);
            let rt = sample_regime(&mut regime_rng);
            let it = interactions_from_regime(rt, None, &self.rule);
            let (xt, _) = self.entangler.forward(&state)?;
            push_frame(&mut c, &mut r, &mut i, &mut x, &state, rt, &it, xt);
        }

        Ok(Dataset {
            manifest: self.manifest(DatasetMode::Iid, substream, frames),
            c,
            r,
            i,
            x,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn push_frame(
    c: &mut Vec<f32>,
    r: &mut Vec<f32>,
    i: &mut Vec<f32>,
    x: &mut Vec<f32>,
    state: &[f64],
    rt: [f64; 2],
    it: &[u8],
    xt: Vec<f64>,
) {
    c.extend(state.iter().map(|&v| v as f32));
    r.extend(rt.iter().map(|&v| v as f32));
    i.extend(it.iter().map(|&b| b as f32));
    x.extend(xt.iter().map(|&v| v as f32));
}
