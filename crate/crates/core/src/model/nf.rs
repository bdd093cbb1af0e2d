//! Two-stage variant: a deterministic autoencoder learns a latent space
//! first, then a normalizing flow is trained on top of the frozen
//! autoencoder to map those latents into a causally structured space under
//! the same per-latent interaction prior as the VAE.
//!
//! Stage order is enforced: flow training on an autoencoder that has not
//! been marked trained is an error, and the flow loss detaches the
//! autoencoder latents so no gradient can leak back.

use crate::error::{CoreError, Result};
use crate::rng::RngStream;
use crate::tensor::{gaussian_log_prob, ops, ParamStore, Tensor};
use super::nn::{Act, Mlp};
use super::{logit_regularizer, validated_latents, InteractionPrior, ModelConfig};

#[derive(Debug, Clone)]
pub struct NfModel {
    obs_dim: usize,
    m: usize,
    encoder: Mlp,
    decoder: Mlp,
    /// Coupling nets; layer l conditions on one half and produces
    /// (log-scale, shift) for the other, alternating halves by parity.
    couplings: Vec<Mlp>,
    prior: InteractionPrior,
    ae_noise_std: f64,
    ae_latent_penalty: f64,
    ae_trained: bool,
}

/// (conditioning dim, transformed dim) for coupling layer `l` of an M-dim
/// flow: even layers condition on the first half, odd layers on the second.
fn coupling_split(m: usize, l: usize) -> (usize, usize) {
    let half = m / 2;
    if l % 2 == 0 {
        (half, m - half)
    } else {
        (m - half, half)
    }
}

impl NfModel {
    pub fn init(
        store: &mut ParamStore,
        obs_dim: usize,
        config: &ModelConfig,
        rng: &RngStream,
    ) -> Result<NfModel> {
        let m = validated_latents(obs_dim, config)?;
        if m < 2 {
            return Err(CoreError::invalid(
                "the coupling flow needs at least 2 latents",
            ));
        }
        let h = config.enc_hidden;
        let encoder = Mlp::init(
            store,
            "ae.enc",
            &[obs_dim, h, h, m],
            Act::Silu,
            false,
            &mut rng.split("ae-encoder", 0),
        )?;
        let decoder = Mlp::init(
            store,
            "ae.dec",
            &[m, h, h, obs_dim],
            Act::Silu,
            false,
            &mut rng.split("ae-decoder", 0),
        )?;
        let mut couplings = Vec::with_capacity(config.flow_layers);
        for l in 0..config.flow_layers {
            let (d_cond, d_out) = coupling_split(m, l);
            couplings.push(Mlp::init(
                store,
                &format!("flow.{l:02}"),
                &[d_cond, config.flow_hidden, 2 * d_out],
                Act::Silu,
                true, // zero last layer: the flow starts as the identity
                &mut rng.split("flow", l as u64),
            )?);
        }
        let prior = InteractionPrior::init(store, m, config.prior_hidden, rng)?;
        Ok(NfModel {
            obs_dim,
            m,
            encoder,
            decoder,
            couplings,
            prior,
            ae_noise_std: config.ae_noise_std,
            ae_latent_penalty: config.ae_latent_penalty,
            ae_trained: false,
        })
    }

    /// Rebuild the handle structure for an existing parameter store
    /// (checkpoint loading); no parameters are created or modified.
    pub fn attach(obs_dim: usize, config: &ModelConfig, ae_trained: bool) -> Result<NfModel> {
        let m = validated_latents(obs_dim, config)?;
        if m < 2 {
            return Err(CoreError::invalid(
                "the coupling flow needs at least 2 latents",
            ));
        }
        let h = config.enc_hidden;
        let couplings = (0..config.flow_layers)
            .map(|l| {
                let (d_cond, d_out) = coupling_split(m, l);
                Mlp::attach(
                    &format!("flow.{l:02}"),
                    &[d_cond, config.flow_hidden, 2 * d_out],
                    Act::Silu,
                )
            })
            .collect();
        Ok(NfModel {
            obs_dim,
            m,
            encoder: Mlp::attach("ae.enc", &[obs_dim, h, h, m], Act::Silu),
            decoder: Mlp::attach("ae.dec", &[m, h, h, obs_dim], Act::Silu),
            couplings,
            prior: InteractionPrior::attach(m, config.prior_hidden),
            ae_noise_std: config.ae_noise_std,
            ae_latent_penalty: config.ae_latent_penalty,
            ae_trained,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn latents(&self) -> usize {
        self.m
    }

    pub fn ae_trained(&self) -> bool {
        self.ae_trained
    }

    /// Marks stage 1 complete, unlocking flow training.
    pub fn set_ae_trained(&mut self) {
        self.ae_trained = true;
    }

    pub fn ae_encode(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        self.encoder.forward(store, x)
    }

    pub fn ae_decode(&self, store: &ParamStore, e: &Tensor) -> Result<Tensor> {
        self.decoder.forward(store, e)
    }

    /// Stage-1 objective: reconstruction MSE through noisy latents plus a
    /// small L2 pull on the latents, both averaged over every element.
    /// `recon` carries the MSE and `reg` the pre-weight latent penalty.
    pub fn ae_loss(
        &self,
        store: &ParamStore,
        x: &Tensor,
        rng: &mut RngStream,
    ) -> Result<super::LossParts> {
        let e = self.ae_encode(store, x)?;
        let noise: Vec<f64> = rng
            .normal_vec(e.len())
            .into_iter()
            .map(|v| v * self.ae_noise_std)
            .collect();
        let noise = Tensor::from_vec(noise, e.shape().to_vec())?;
        let x_hat = self.ae_decode(store, &ops::add(&e, &noise)?)?;
        let diff = ops::sub(&x_hat, x)?;
        let mse = ops::mean_all(&ops::mul(&diff, &diff)?)?;
        let penalty = ops::mean_all(&ops::mul(&e, &e)?)?;
        let total = ops::add(&mse, &ops::scale(&penalty, self.ae_latent_penalty)?)?;
        Ok(super::LossParts {
            recon: mse.item(),
            kl: 0.0,
            reg: penalty.item(),
            total,
        })
    }

    /// e (B, M) → (z, log_det) with log_det (B,). Each coupling layer applies
    /// b ← b·exp(s) + t with (s, t) a function of the untouched half and s
    /// tanh-bounded; the log-determinant is Σs over transformed columns.
    pub fn flow_forward(&self, store: &ParamStore, e: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut z = e.clone();
        let mut log_det: Option<Tensor> = None;
        for (l, net) in self.couplings.iter().enumerate() {
            let (d_cond, d_out) = coupling_split(self.m, l);
            let (cond, moved) = split_halves(&z, self.m, d_cond, l)?;
            let (s, t) = scale_shift(net, store, &cond, d_out)?;
            let moved = ops::add(&ops::mul(&moved, &ops::exp(&s)?)?, &t)?;
            let contrib = ops::sum_last(&s)?;
            log_det = Some(match log_det {
                Some(acc) => ops::add(&acc, &contrib)?,
                None => contrib,
            });
            z = join_halves(&cond, &moved, l)?;
        }
        Ok((z, log_det.expect("at least one coupling layer")))
    }

    /// Exact inverse of `flow_forward` (up to float round-trip error).
    pub fn flow_inverse(&self, store: &ParamStore, z: &Tensor) -> Result<Tensor> {
        let mut e = z.clone();
        for (l, net) in self.couplings.iter().enumerate().rev() {
            let (d_cond, d_out) = coupling_split(self.m, l);
            let (cond, moved) = split_halves(&e, self.m, d_cond, l)?;
            let (s, t) = scale_shift(net, store, &cond, d_out)?;
            let moved = ops::div(&ops::sub(&moved, &t)?, &ops::exp(&s)?)?;
            e = join_halves(&cond, &moved, l)?;
        }
        Ok(e)
    }

    /// End-to-end causal latents for evaluation: flow(ae_encode(x)).
    pub fn encode(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let e = self.ae_encode(store, x)?;
        Ok(self.flow_forward(store, &e)?.0)
    }

    pub fn interaction_logits(
        &self,
        store: &ParamStore,
        r: &Tensor,
        z_prev: &Tensor,
    ) -> Result<Tensor> {
        self.prior.logits(store, r, z_prev)
    }

    pub fn hard_interactions(
        &self,
        store: &ParamStore,
        r: &Tensor,
        z_prev: &Tensor,
    ) -> Result<Vec<u8>> {
        let logits = self.prior.logits(store, r, z_prev)?;
        Ok(logits.data().iter().map(|&l| (l > 0.0) as u8).collect())
    }

    /// Stage-2 objective on observation pairs: negative prior log-likelihood
    /// of the flowed latents minus the flow's log-determinant, plus the
    /// weighted logit regularizer. Autoencoder latents are detached; errors
    /// if stage 1 has not been marked complete.
    pub fn flow_train_loss(
        &self,
        store: &ParamStore,
        x_prev: &Tensor,
        x_t: &Tensor,
        r: &Tensor,
        tau: f64,
        reg_weight: f64,
    ) -> Result<super::LossParts> {
        if !self.ae_trained {
            return Err(CoreError::invalid(
                "flow training requires a trained autoencoder (stage 1 incomplete)",
            ));
        }
        let e_prev = self.ae_encode(store, x_prev)?.detach();
        let e_t = self.ae_encode(store, x_t)?.detach();
        let (z_prev, _) = self.flow_forward(store, &e_prev)?;
        let (z_t, log_det) = self.flow_forward(store, &e_t)?;

        let logits = self.prior.logits(store, r, &z_prev)?;
        let soft = ops::tanh(&ops::scale(&logits, tau)?)?;
        let (mp, sp) = self.prior.params_from_soft(store, &z_prev, &soft)?;
        let log_p = ops::sum_last(&gaussian_log_prob(&z_t, &mp, &sp)?)?;
        let nll = ops::neg(&ops::mean_all(&ops::add(&log_p, &log_det)?)?)?;

        let reg = logit_regularizer(&logits)?;
        let total = ops::add(&nll, &ops::scale(&reg, reg_weight)?)?;
        Ok(super::LossParts {
            recon: nll.item(),
            kl: 0.0,
            reg: reg.item(),
            total,
        })
    }
}

fn split_halves(z: &Tensor, m: usize, d_cond: usize, l: usize) -> Result<(Tensor, Tensor)> {
    if l % 2 == 0 {
        Ok((ops::slice_cols(z, 0, d_cond)?, ops::slice_cols(z, d_cond, m)?))
    } else {
        let d_out = m - d_cond;
        Ok((ops::slice_cols(z, d_out, m)?, ops::slice_cols(z, 0, d_out)?))
    }
}

fn join_halves(cond: &Tensor, moved: &Tensor, l: usize) -> Result<Tensor> {
    if l % 2 == 0 {
        ops::concat_cols(&[cond.clone(), moved.clone()])
    } else {
        ops::concat_cols(&[moved.clone(), cond.clone()])
    }
}

fn scale_shift(
    net: &Mlp,
    store: &ParamStore,
    cond: &Tensor,
    d_out: usize,
) -> Result<(Tensor, Tensor)> {
    let out = net.forward(store, cond)?;
    let s = ops::tanh(&ops::slice_cols(&out, 0, d_out)?)?;
    let t = ops::slice_cols(&out, d_out, 2 * d_out)?;
    Ok((s, t))
}
