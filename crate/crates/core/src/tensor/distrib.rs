//! Differentiable Gaussian log-density, KL divergence, and the
//! reparameterized sampler used by the variational objective.

use super::{ops, Tensor};
use crate::error::{CoreError, Result};
use crate::rng::RngStream;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Floor applied to standard deviations before sampling; matches the floor
/// the model applies after softplus.
pub const STD_FLOOR: f64 = 1e-6;

fn require_positive(std: &Tensor, op: &'static str) -> Result<()> {
    if std.data().iter().all(|&s| s > 0.0) {
        Ok(())
    } else {
        Err(CoreError::invalid(format!("{op}: std must be positive")))
    }
}

/// Elementwise log N(x; mean, std²) = −½((x−mean)/std)² − log std − ½log 2π.
pub fn gaussian_log_prob(x: &Tensor, mean: &Tensor, std: &Tensor) -> Result<Tensor> {
    require_positive(std, "gaussian_log_prob")?;
    let z = ops::div(&ops::sub(x, mean)?, std)?;
    let quad = ops::scale(&ops::mul(&z, &z)?, -0.5)?;
    ops::add_scalar(&ops::sub(&quad, &ops::log(std)?)?, -HALF_LN_2PI)
}

/// KL(N(μq,σq²) ‖ N(μp,σp²)) per element, summed over the last axis:
/// log(σp/σq) + (σq² + (μq−μp)²)/(2σp²) − ½.
pub fn kl_diag_gaussians(
    mean_q: &Tensor,
    std_q: &Tensor,
    mean_p: &Tensor,
    std_p: &Tensor,
) -> Result<Tensor> {
    require_positive(std_q, "kl_diag_gaussians")?;
    require_positive(std_p, "kl_diag_gaussians")?;
    let log_ratio = ops::sub(&ops::log(std_p)?, &ops::log(std_q)?)?;
    let diff = ops::sub(mean_q, mean_p)?;
    let numer = ops::add(&ops::mul(std_q, std_q)?, &ops::mul(&diff, &diff)?)?;
    let denom = ops::scale(&ops::mul(std_p, std_p)?, 2.0)?;
    let term = ops::add_scalar(&ops::add(&log_ratio, &ops::div(&numer, &denom)?)?, -0.5)?;
    ops::sum_last(&term)
}

/// mean + std·ε with ε ~ N(0, I) drawn from `rng`; gradients flow to mean and
/// std. Stds below [`STD_FLOOR`] are clamped to it.
pub fn reparam_sample(mean: &Tensor, std: &Tensor, rng: &mut RngStream) -> Result<Tensor> {
    if std.data().iter().any(|&s| s < 0.0) {
        return Err(CoreError::invalid("reparam_sample: std must be nonnegative"));
    }
    if mean.shape() != std.shape() {
        return Err(CoreError::ShapeMismatch {
            op: "reparam_sample",
            lhs: mean.shape().to_vec(),
            rhs: std.shape().to_vec(),
        });
    }
    let eps = Tensor::randn(mean.shape().to_vec(), rng);
    let floored = ops::clamp_min(std, STD_FLOOR)?;
    ops::add(mean, &ops::mul(&floored, &eps)?)
}
