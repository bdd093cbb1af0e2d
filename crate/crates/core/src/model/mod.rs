//! The BISCUIT learner: a variational autoencoder whose transition prior
//! carries one learned binary interaction variable per latent.
//!
//! Per latent i, a dedicated network maps (R, z^{t−1}) to a logit whose
//! tanh(logit·τ) is the soft interaction value Î_i; a second dedicated
//! network maps (z^{t−1}, Î_i) to the Gaussian parameters of z_i^t. R can
//! reach latent i's transition distribution only through the scalar Î_i,
//! which is what pushes the learned latents onto the causal variables. The
//! temperature τ anneals from 1 to 5 so Î_i approaches a binary step, and a
//! one-sided regularizer pulls logits below −1 (interactions off by default).

pub mod checkpoint;
pub mod nf;
pub mod nn;

use crate::error::{CoreError, Result};
use crate::rng::RngStream;
use crate::tensor::{
    gaussian_log_prob, kl_diag_gaussians, ops, reparam_sample, ParamStore, Tensor, STD_FLOOR,
};
use nn::{Act, Mlp};
use serde::{Deserialize, Serialize};

/// Weight of the logit regularizer when added to the loss.
pub const DEFAULT_REG_WEIGHT: f64 = 5e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Latent count M; None defaults to 2K at build time. M ≥ K required.
    pub latents: Option<usize>,
    /// Hidden width of the 3-layer encoder/decoder MLPs.
    pub enc_hidden: usize,
    /// Hidden width of the 2-layer per-latent prior networks.
    pub prior_hidden: usize,
    /// Train the two-stage autoencoder + flow variant instead of the VAE.
    pub nf: bool,
    pub flow_layers: usize,
    pub flow_hidden: usize,
    /// Gaussian noise added to autoencoder latents during stage-1 training.
    pub ae_noise_std: f64,
    /// L2 penalty weight on autoencoder latents.
    pub ae_latent_penalty: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latents: None,
            enc_hidden: 128,
            prior_hidden: 32,
            nf: false,
            flow_layers: 6,
            flow_hidden: 32,
            ae_noise_std: 0.05,
            ae_latent_penalty: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn resolve_latents(&self, obs_dim: usize) -> usize {
        self.latents.unwrap_or(2 * obs_dim)
    }
}

/// Linear temperature ramp: τ(e) = start + (end − start)·e/total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureSchedule {
    pub tau_start: f64,
    pub tau_end: f64,
    pub total_epochs: usize,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule {
            tau_start: 1.0,
            tau_end: 5.0,
            total_epochs: 100,
        }
    }
}

impl TemperatureSchedule {
    pub fn with_epochs(total_epochs: usize) -> Self {
        TemperatureSchedule {
            total_epochs,
            ..TemperatureSchedule::default()
        }
    }

    pub fn tau(&self, epoch: usize) -> f64 {
        let frac = epoch as f64 / self.total_epochs.max(1) as f64;
        self.tau_start + (self.tau_end - self.tau_start) * frac
    }
}

/// One-sided pull toward logits ≤ −1: mean over all entries of max(x+1, 0)².
pub fn logit_regularizer(logits: &Tensor) -> Result<Tensor> {
    let shifted = ops::relu(&ops::add_scalar(logits, 1.0)?)?;
    ops::mean_all(&ops::mul(&shifted, &shifted)?)
}

fn validated_latents(obs_dim: usize, config: &ModelConfig) -> Result<usize> {
    let m = config.resolve_latents(obs_dim);
    if obs_dim == 0 || m < obs_dim {
        return Err(CoreError::invalid(format!(
            "latent count {m} must be ≥ observation dimension {obs_dim}"
        )));
    }
    Ok(m)
}

/// The structured prior shared by both model variants: per latent i a logit
/// network (R ⊕ z^{t−1} → 1) and a transition network (z^{t−1} ⊕ Î_i →
/// mean, pre-std), all parameter-disjoint across latents.
#[derive(Debug, Clone)]
pub struct InteractionPrior {
    m: usize,
    inter: Vec<Mlp>,
    trans: Vec<Mlp>,
}

impl InteractionPrior {
    fn net_dims(m: usize, hidden: usize) -> ([usize; 3], [usize; 3]) {
        ([2 + m, hidden, 1], [m + 1, hidden, 2])
    }

    pub fn init(
        store: &mut ParamStore,
        m: usize,
        hidden: usize,
        rng: &RngStream,
    ) -> Result<InteractionPrior> {
        let (inter_dims, trans_dims) = Self::net_dims(m, hidden);
        let mut inter = Vec::with_capacity(m);
        let mut trans = Vec::with_capacity(m);
        for i in 0..m {
            inter.push(Mlp::init(
                store,
                &format!("inter.{i:02}"),
                &inter_dims,
                Act::Silu,
                false,
                &mut rng.split("inter", i as u64),
            )?);
            trans.push(Mlp::init(
                store,
                &format!("trans.{i:02}"),
                &trans_dims,
                Act::Silu,
                false,
                &mut rng.split("trans", i as u64),
            )?);
        }
        Ok(InteractionPrior { m, inter, trans })
    }

    /// Rebuild the handle structure without touching parameters (checkpoint
    /// loading); forward passes fail if the store lacks the paths.
    pub fn attach(m: usize, hidden: usize) -> InteractionPrior {
        let (inter_dims, trans_dims) = Self::net_dims(m, hidden);
        let inter = (0..m)
            .map(|i| Mlp::attach(&format!("inter.{i:02}"), &inter_dims, Act::Silu))
            .collect();
        let trans = (0..m)
            .map(|i| Mlp::attach(&format!("trans.{i:02}"), &trans_dims, Act::Silu))
            .collect();
        InteractionPrior { m, inter, trans }
    }

    pub fn logits(&self, store: &ParamStore, r: &Tensor, z_prev: &Tensor) -> Result<Tensor> {
        let input = ops::concat_cols(&[r.clone(), z_prev.clone()])?;
        let cols = self
            .inter
            .iter()
            .map(|net| net.forward(store, &input))
            .collect::<Result<Vec<_>>>()?;
        ops::concat_cols(&cols)
    }

    /// Latent i sees z^{t−1} and only its own interaction column.
    pub fn params_from_soft(
        &self,
        store: &ParamStore,
        z_prev: &Tensor,
        soft: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let mut means = Vec::with_capacity(self.m);
        let mut pre_stds = Vec::with_capacity(self.m);
        for (i, net) in self.trans.iter().enumerate() {
            let own = ops::slice_cols(soft, i, i + 1)?;
            let input = ops::concat_cols(&[z_prev.clone(), own])?;
            let out = net.forward(store, &input)?;
            means.push(ops::slice_cols(&out, 0, 1)?);
            pre_stds.push(ops::slice_cols(&out, 1, 2)?);
        }
        let mean = ops::concat_cols(&means)?;
        let std = ops::add_scalar(&ops::softplus(&ops::concat_cols(&pre_stds)?)?, STD_FLOOR)?;
        Ok((mean, std))
    }
}

#[derive(Debug, Clone)]
pub struct BiscuitModel {
    obs_dim: usize,
    m: usize,
    encoder: Mlp,
    decoder: Mlp,
    prior: InteractionPrior,
}

/// Differentiable total plus the logged components (already batch-averaged;
/// `reg` is pre-weight).
#[derive(Debug)]
pub struct LossParts {
    pub total: Tensor,
    pub recon: f64,
    pub kl: f64,
    pub reg: f64,
}

impl BiscuitModel {
    pub fn init(
        store: &mut ParamStore,
        obs_dim: usize,
        config: &ModelConfig,
        rng: &RngStream,
    ) -> Result<BiscuitModel> {
        let m = validated_latents(obs_dim, config)?;
        let h = config.enc_hidden;
        let encoder = Mlp::init(
            store,
            "enc",
            &[obs_dim, h, h, 2 * m],
            Act::Silu,
            false,
            &mut rng.split("encoder", 0),
        )?;
        let decoder = Mlp::init(
            store,
            "dec",
            &[m, h, h, obs_dim],
            Act::Silu,
            false,
            &mut rng.split("decoder", 0),
        )?;
        let prior = InteractionPrior::init(store, m, config.prior_hidden, rng)?;
        Ok(BiscuitModel {
            obs_dim,
            m,
            encoder,
            decoder,
            prior,
        })
    }

    /// Rebuild the handle structure for an existing parameter store
    /// (checkpoint loading); no parameters are created or modified.
    pub fn attach(obs_dim: usize, config: &ModelConfig) -> Result<BiscuitModel> {
        let m = validated_latents(obs_dim, config)?;
        let h = config.enc_hidden;
        Ok(BiscuitModel {
            obs_dim,
            m,
            encoder: Mlp::attach("enc", &[obs_dim, h, h, 2 * m], Act::Silu),
            decoder: Mlp::attach("dec", &[m, h, h, obs_dim], Act::Silu),
            prior: InteractionPrior::attach(m, config.prior_hidden),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn latents(&self) -> usize {
        self.m
    }

    /// q(z|x): x (B, obs_dim) → mean, std each (B, M); std = softplus + floor.
    pub fn encode(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let out = self.encoder.forward(store, x)?;
        let mean = ops::slice_cols(&out, 0, self.m)?;
        let pre_std = ops::slice_cols(&out, self.m, 2 * self.m)?;
        let std = ops::add_scalar(&ops::softplus(&pre_std)?, STD_FLOOR)?;
        Ok((mean, std))
    }

    /// Decoder mean of p(x|z); the likelihood is a unit-variance Gaussian.
    pub fn decode(&self, store: &ParamStore, z: &Tensor) -> Result<Tensor> {
        self.decoder.forward(store, z)
    }

    /// Logits of all M interaction variables: (B, 2) regime ⊕ (B, M)
    /// previous latents → (B, M).
    pub fn interaction_logits(
        &self,
        store: &ParamStore,
        r: &Tensor,
        z_prev: &Tensor,
    ) -> Result<Tensor> {
        self.prior.logits(store, r, z_prev)
    }

    /// Î = tanh(logit·τ) ∈ (−1, 1); approaches sign(logit) as τ grows.
    pub fn soft_interactions(
        &self,
        store: &ParamStore,
        r: &Tensor,
        z_prev: &Tensor,
        tau: f64,
    ) -> Result<Tensor> {
        let logits = self.interaction_logits(store, r, z_prev)?;
        ops::tanh(&ops::scale(&logits, tau)?)
    }

    /// Inference-time binarization: 1 iff logit > 0 (ties break to 0, the
    /// observational regime). Row-major (B, M) bits.
    pub fn hard_interactions(
        &self,
        store: &ParamStore,
        r: &Tensor,
        z_prev: &Tensor,
    ) -> Result<Vec<u8>> {
        let logits = self.interaction_logits(store, r, z_prev)?;
        Ok(logits.data().iter().map(|&l| (l > 0.0) as u8).collect())
    }

    /// p_ω(z^t | z^{t−1}, Î): per-latent means and stds, each (B, M), where
    /// `soft` is the (B, M) matrix of interaction values.
    pub fn prior_params_from_soft(
        &self,
        store: &ParamStore,
        z_prev: &Tensor,
        soft: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        self.prior.params_from_soft(store, z_prev, soft)
    }

    pub fn prior_params(
        &self,
        store: &ParamStore,
        z_prev: &Tensor,
        r: &Tensor,
        tau: f64,
    ) -> Result<(Tensor, Tensor)> {
        let soft = self.soft_interactions(store, r, z_prev, tau)?;
        self.prior_params_from_soft(store, z_prev, &soft)
    }

    /// The training objective on a batch of triplets: reconstruction NLL of
    /// x^t under the unit-variance decoder at a sampled z^t, plus analytic
    /// KL(q(z^t|x^t) ‖ p_ω(z^t | z^{t−1}, R^t)) at one reparameterized
    /// z^{t−1} draw, plus the weighted logit regularizer. Gradients flow
    /// through the z^{t−1} sample into both encoder and prior.
    ///
    /// Consumes exactly two reparameterization draws from `rng` (z^{t−1}
    /// first, then z^t), so callers can replay a call by resetting the
    /// stream counter.
    pub fn elbo_loss(
        &self,
        store: &ParamStore,
        x_prev: &Tensor,
        x_t: &Tensor,
        r: &Tensor,
        tau: f64,
        reg_weight: f64,
        rng: &mut RngStream,
    ) -> Result<LossParts> {
        let (mq_prev, sq_prev) = self.encode(store, x_prev)?;
        let z_prev = reparam_sample(&mq_prev, &sq_prev, rng)?;
        let (mq_t, sq_t) = self.encode(store, x_t)?;
        let z_t = reparam_sample(&mq_t, &sq_t, rng)?;

        let x_hat = self.decode(store, &z_t)?;
        let unit = Tensor::from_vec(vec![1.0; x_t.len()], x_t.shape().to_vec())?;
        let log_px = gaussian_log_prob(x_t, &x_hat, &unit)?;
        let recon = ops::neg(&ops::mean_all(&ops::sum_last(&log_px)?)?)?;

        let logits = self.interaction_logits(store, r, &z_prev)?;
        let soft = ops::tanh(&ops::scale(&logits, tau)?)?;
        let (mp, sp) = self.prior_params_from_soft(store, &z_prev, &soft)?;
        let kl = ops::mean_all(&kl_diag_gaussians(&mq_t, &sq_t, &mp, &sp)?)?;

        let reg = logit_regularizer(&logits)?;
        let total = ops::add(&ops::add(&recon, &kl)?, &ops::scale(&reg, reg_weight)?)?;
        Ok(LossParts {
            recon: recon.item(),
            kl: kl.item(),
            reg: reg.item(),
            total,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::backward;
    use crate::testing::{assert_close, rel_err};

    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

    fn small_model(k: usize, m: usize, seed: u64) -> (ParamStore, BiscuitModel) {
        let mut store = ParamStore::new();
        let config = ModelConfig {
            latents: Some(m),
            enc_hidden: 16,
            prior_hidden: 8,
            ..ModelConfig::default()
        };
        let model = BiscuitModel::init(
            &mut store,
            k,
            &config,
            &RngStream::new(seed).split("model", 0),
        )
        .unwrap();
        (store, model)
    }

    fn set_param(store: &mut ParamStore, path: &str, value: Vec<f64>) {
        let n = value.len();
        store
            .restore(path, value, vec![0.0; n], vec![0.0; n], 0)
            .unwrap();
    }

    fn zero_prefix(store: &mut ParamStore, prefix: &str) {
        let todo: Vec<(String, usize)> = store
            .entries()
            .filter(|(p, ..)| p.starts_with(prefix))
            .map(|(p, _, v, ..)| (p.to_string(), v.len()))
            .collect();
        for (p, n) in todo {
            set_param(store, &p, vec![0.0; n]);
        }
    }

    fn batch(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = RngStream::new(seed).split("batch", 0);
        Tensor::from_vec(rng.normal_vec(rows * cols), vec![rows, cols]).unwrap()
    }

    #[test]
    fn encode_shapes_and_positive_std() {
        let (store, model) = small_model(3, 6, 1);
        let x = batch(5, 3, 10);
        let (mean, std) = model.encode(&store, &x).unwrap();
        assert_eq!(mean.shape(), &[5, 6]);
        assert_eq!(std.shape(), &[5, 6]);
        assert!(std.data().iter().all(|&s| s > 0.0));
    }

    #[test]
    fn latent_count_must_cover_observations() {
        let mut store = ParamStore::new();
        let config = ModelConfig {
            latents: Some(2),
            ..ModelConfig::default()
        };
        let err = BiscuitModel::init(&mut store, 3, &config, &RngStream::new(0)).unwrap_err();
        assert!(err.to_string().contains("≥"));
        assert_eq!(ModelConfig::default().resolve_latents(6), 12);
    }

    #[test]
    fn zero_weight_encoder_outputs_bias_constants() {
        let (mut store, model) = small_model(3, 4, 2);
        zero_prefix(&mut store, "enc.");
        let mut bias = vec![0.0; 8];
        bias[0] = 0.7; // mean of latent 0
        bias[4] = 0.25; // pre-std of latent 0
        set_param(&mut store, "enc.l2.b", bias);
        let (m1, s1) = model.encode(&store, &batch(2, 3, 11)).unwrap();
        let (m2, s2) = model.encode(&store, &batch(2, 3, 12)).unwrap();
        assert_eq!(m1.data(), m2.data());
        assert_eq!(s1.data(), s2.data());
        assert_close(m1.data()[0], 0.7, 1e-15);
        let softplus = |x: f64| libm::log(1.0 + libm::exp(x));
        assert_close(s1.data()[0], softplus(0.25) + STD_FLOOR, 1e-12);
        assert_close(s1.data()[1], softplus(0.0) + STD_FLOOR, 1e-12);
    }

    #[test]
    fn soft_interaction_matches_tanh_of_scaled_logit() {
        let (mut store, model) = small_model(2, 4, 3);
        zero_prefix(&mut store, "inter.00.");
        let (r, z) = (batch(3, 2, 20), batch(3, 4, 21));

        for (bias, tau, want, tol) in [
            (0.3, 5.0, libm::tanh(1.5), 1e-15),
            (0.3, 5.0, 0.9051, 5e-5),
            (0.0, 7.0, 0.0, 0.0),
            (-2.0, 5.0, -1.0, 1e-8),
        ] {
            set_param(&mut store, "inter.00.l1.b", vec![bias]);
            let soft = model.soft_interactions(&store, &r, &z, tau).unwrap();
            for row in 0..3 {
                assert_close(soft.data()[row * 4], want, tol);
            }
        }
    }

    #[test]
    fn hard_interaction_sign_rule_with_tie_to_zero() {
        let (mut store, model) = small_model(2, 4, 4);
        zero_prefix(&mut store, "inter.00.");
        let (r, z) = (batch(1, 2, 22), batch(1, 4, 23));
        for (bias, want) in [(0.3, 1u8), (-0.3, 0), (0.0, 0)] {
            set_param(&mut store, "inter.00.l1.b", vec![bias]);
            let hard = model.hard_interactions(&store, &r, &z).unwrap();
            assert_eq!(hard[0], want, "bias {bias}");
        }
    }

    #[test]
    fn regime_reaches_transition_only_through_interaction_value() {
        let (mut store, model) = small_model(2, 4, 5);
        // Kill latent 0's logit entirely: its Î is 0 for every regime.
        zero_prefix(&mut store, "inter.00.");
        let z = batch(4, 4, 30);
        let (r1, r2) = (batch(4, 2, 31), batch(4, 2, 32));
        let (m1, s1) = model.prior_params(&store, &z, &r1, 3.0).unwrap();
        let (m2, s2) = model.prior_params(&store, &z, &r2, 3.0).unwrap();
        for row in 0..4 {
            // Latent 0: identical soft value ⇒ identical prior parameters.
            assert_eq!(m1.data()[row * 4], m2.data()[row * 4]);
            assert_eq!(s1.data()[row * 4], s2.data()[row * 4]);
            // Latent 1 still reacts to the regime (its logit net is live).
            assert_ne!(m1.data()[row * 4 + 1], m2.data()[row * 4 + 1]);
        }
    }

    #[test]
    fn prior_params_shapes_and_z_prev_sensitivity() {
        let (store, model) = small_model(3, 6, 6);
        let r = batch(2, 2, 40);
        let z1 = batch(2, 6, 41);
        let z2 = batch(2, 6, 42);
        let (m1, s1) = model.prior_params(&store, &z1, &r, 1.0).unwrap();
        let (m2, _) = model.prior_params(&store, &z2, &r, 1.0).unwrap();
        assert_eq!(m1.shape(), &[2, 6]);
        assert_eq!(s1.shape(), &[2, 6]);
        assert!(s1.data().iter().all(|&s| s > 0.0));
        let moved = m1
            .data()
            .iter()
            .zip(m2.data())
            .filter(|(a, b)| (*a - *b).abs() > 1e-9)
            .count();
        assert_eq!(moved, 12, "every latent mean should react to z_prev");
    }

    #[test]
    fn logit_regularizer_one_sided_values() {
        let reg = |vals: Vec<f64>| {
            let n = vals.len();
            logit_regularizer(&Tensor::from_vec(vals, vec![1, n]).unwrap())
                .unwrap()
                .item()
        };
        assert_eq!(reg(vec![-1.0]), 0.0);
        assert_eq!(reg(vec![-3.0]), 0.0);
        assert_close(reg(vec![0.0]), 1.0, 1e-15);
        // Mean over entries: (0 + 1 + 4) / 3.
        assert_close(reg(vec![-2.0, 0.0, 1.0]), 5.0 / 3.0, 1e-15);
    }

    #[test]
    fn elbo_with_zeroed_model_hits_exact_constants() {
        let (mut store, model) = small_model(3, 6, 7);
        for prefix in ["enc.", "dec.", "inter.", "trans."] {
            zero_prefix(&mut store, prefix);
        }
        let k = 3;
        let x = Tensor::from_vec(vec![0.0; 4 * k], vec![4, k]).unwrap();
        let r = batch(4, 2, 50);
        let mut rng = RngStream::new(9).split("elbo", 0);
        let parts = model
            .elbo_loss(&store, &x, &x, &r, 2.0, DEFAULT_REG_WEIGHT, &mut rng)
            .unwrap();
        // Posterior and prior are both N(0, softplus(0)+floor) for every
        // latent ⇒ KL exactly 0. Decoder reconstructs 0 = x exactly ⇒ recon
        // is K·½ln2π. Logits are exactly 0 ⇒ regularizer is 1 pre-weight.
        assert_eq!(parts.kl, 0.0);
        assert_close(parts.recon, k as f64 * HALF_LN_2PI, 1e-12);
        assert_close(parts.reg, 1.0, 1e-15);
        assert_close(
            parts.total.item(),
            k as f64 * HALF_LN_2PI + DEFAULT_REG_WEIGHT,
            1e-12);
    }

    /// Scales parameters under `prefix` so posterior/prior stay moderately
    /// separated; keeps Monte-Carlo estimator variance compatible with the
    /// 0.02 tolerance below.
    fn damp_prefix(store: &mut ParamStore, prefix: &str, factor: f64) {
        let todo: Vec<(String, Vec<f64>)> = store
            .entries()
            .filter(|(p, ..)| p.starts_with(prefix))
            .map(|(p, _, v, ..)| (p.to_string(), v.iter().map(|x| x * factor).collect()))
            .collect();
        for (p, v) in todo {
            set_param(store, &p, v);
        }
    }

    #[test]
    fn analytic_kl_matches_monte_carlo() {
        let (mut store, model) = small_model(2, 4, 8);
        damp_prefix(&mut store, "enc.l2.", 0.1);
        for i in 0..4 {
            damp_prefix(&mut store, &format!("trans.{i:02}.l1."), 0.1);
        }
        let b = 64;
        let x_prev = batch(b, 2, 60);
        let x_t = batch(b, 2, 61);
        let r = batch(b, 2, 62);
        let tau = 3.0;

        // Reproduce the loss path's z_prev draw, then compare KL estimates.
        let mut rng = RngStream::new(33).split("mc", 0);
        let (mq_prev, sq_prev) = model.encode(&store, &x_prev).unwrap();
        let z_prev = reparam_sample(&mq_prev, &sq_prev, &mut rng).unwrap();
        let (mq, sq) = model.encode(&store, &x_t).unwrap();
        let (mp, sp) = model.prior_params(&store, &z_prev, &r, tau).unwrap();
        let analytic = ops::mean_all(&kl_diag_gaussians(&mq, &sq, &mp, &sp).unwrap())
            .unwrap()
            .item();

        let m = model.latents();
        let log_pdf = |x: f64, mu: f64, s: f64| {
            -0.5 * ((x - mu) / s) * ((x - mu) / s) - libm::log(s) - HALF_LN_2PI
        };
        let mut mc_rng = RngStream::new(34).split("mc-draws", 0);
        let mut acc = 0.0;
        for row in 0..b {
            for _ in 0..1000 {
                for j in 0..m {
                    let (mu_q, s_q) = (mq.data()[row * m + j], sq.data()[row * m + j]);
                    let (mu_p, s_p) = (mp.data()[row * m + j], sp.data()[row * m + j]);
                    let z = mu_q + s_q * mc_rng.standard_normal();
                    acc += log_pdf(z, mu_q, s_q) - log_pdf(z, mu_p, s_p);
                }
            }
        }
        let mc = acc / (b as f64 * 1000.0);
        assert!(
            (0.01..5.0).contains(&analytic),
            "oracle needs a moderate KL, got {analytic}"
        );
        assert!(
            (mc - analytic).abs() <= 0.02,
            "MC {mc} vs analytic {analytic}"
        );
    }

    #[test]
    fn gradient_reaches_every_parameter_at_init() {
        let (store, model) = small_model(3, 6, 10);
        let mut rng = RngStream::new(11).split("gradflow", 0);
        let parts = model
            .elbo_loss(
                &store,
                &batch(8, 3, 70),
                &batch(8, 3, 71),
                &batch(8, 2, 72),
                1.0,
                DEFAULT_REG_WEIGHT,
                &mut rng,
            )
            .unwrap();
        let grads = backward(&parts.total).unwrap();
        for path in store.paths() {
            let leaf = store.get(path).unwrap();
            let g = grads
                .get(&leaf)
                .unwrap_or_else(|| panic!("no gradient for {path}"));
            assert!(
                g.iter().any(|&v| v != 0.0),
                "all-zero gradient for {path}"
            );
        }
    }

    #[test]
    fn annealing_endpoints_monotone_and_loss_finite() {
        let sched = TemperatureSchedule::with_epochs(100);
        assert_eq!(sched.tau(0), 1.0);
        assert_eq!(sched.tau(100), 5.0);
        let mut prev = f64::NEG_INFINITY;
        for e in 0..=100 {
            let t = sched.tau(e);
            assert!(t >= prev);
            prev = t;
        }

        let (store, model) = small_model(2, 4, 12);
        for tau in [1.0, 2.0, 3.0, 4.0, 5.0] {
            let mut rng = RngStream::new(13).split("finite", 0);
            let parts = model
                .elbo_loss(
                    &store,
                    &batch(4, 2, 80),
                    &batch(4, 2, 81),
                    &batch(4, 2, 82),
                    tau,
                    DEFAULT_REG_WEIGHT,
                    &mut rng,
                )
                .unwrap();
            assert!(parts.total.item().is_finite(), "τ={tau}");
        }
    }

// temporary probe: drop into model/mod.rs tests
    /// Finite-difference oracle over the full objective: analytic gradients
    /// from one backward pass vs central differences on sampled parameter
    /// coordinates, with the reparameterization noise replayed via the
    /// stream counter.
    #[test]
    fn elbo_gradients_match_finite_differences() {
        let (mut store, model) = small_model(2, 4, 14);
        let x_prev = batch(3, 2, 90);
        let x_t = batch(3, 2, 91);
        let r = batch(3, 2, 92);
        let tau = 2.5;

        let mut rng = RngStream::new(15).split("fd", 0);
        let start = rng.counter();
        let parts = model
            .elbo_loss(&store, &x_prev, &x_t, &r, tau, DEFAULT_REG_WEIGHT, &mut rng)
            .unwrap();
        let grads = backward(&parts.total).unwrap();

        let eval = |store: &ParamStore, rng: &mut RngStream| -> f64 {
            rng.set_counter(start);
            model
                .elbo_loss(store, &x_prev, &x_t, &r, tau, DEFAULT_REG_WEIGHT, rng)
                .unwrap()
                .total
                .item()
        };

        let paths: Vec<String> = store.paths().map(|p| p.to_string()).collect();
        // h balances O(h²) truncation against the ~1e-10 absolute noise the
        // exp/softplus chains leave in the loss; 1e-3 sits in the plateau.
        let h = 1e-3;
        let at = |store: &mut ParamStore,
                      rng: &mut RngStream,
                      path: &str,
                      base: &[f64],
                      idx: usize,
                      delta: f64| {
            let mut bumped = base.to_vec();
            bumped[idx] += delta;
            let n = bumped.len();
            store
                .restore(path, bumped, vec![0.0; n], vec![0.0; n], 0)
                .unwrap();
            eval(store, rng)
        };
        for (pi, path) in paths.iter().enumerate() {
            let leaf = store.get(path).unwrap();
            let analytic = grads.get(&leaf).expect("gradient present");
            let base = leaf.data().to_vec();
            // One deterministic coordinate per parameter tensor.
            let idx = (pi * 31) % base.len();
            let plus = at(&mut store, &mut rng, path, &base, idx, h);
            let minus = at(&mut store, &mut rng, path, &base, idx, -h);
            let fd = (plus - minus) / (2.0 * h);
            let err = rel_err(analytic[idx], fd);
            assert!(
                err <= 1e-5,
                "{path}[{idx}]: analytic {} vs fd {fd} (rel {err})",
                analytic[idx]
            );
            let n = base.len();
            store
                .restore(path, base, vec![0.0; n], vec![0.0; n], 0)
                .unwrap();
        }
    }
}
