//! Named parameter storage with per-parameter Adam state.

use super::{Gradients, Tensor};
use crate::error::{CoreError, Result};
use std::collections::BTreeMap;

#[derive(Debug)]
struct Param {
    value: Tensor,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

/// Map from parameter path to tensor plus Adam moments. Paths are unique;
/// iteration is always in path order, so updates and serialization are
/// deterministic.
#[derive(Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a new parameter. The path must be unused.
    pub fn insert(&mut self, path: &str, data: Vec<f64>, shape: Vec<usize>) -> Result<()> {
        if self.params.contains_key(path) {
            return Err(CoreError::invalid(format!(
                "parameter path '{path}' already registered"
            )));
        }
        let n = data.len();
        let value = Tensor::param(data, shape)?;
        self.params.insert(
            path.to_string(),
            Param {
                value,
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            },
        );
        Ok(())
    }

    /// Handle to the current value of a parameter (gradient-tracked leaf).
    pub fn get(&self, path: &str) -> Result<Tensor> {
        self.params
            .get(path)
            .map(|p| p.value.clone())
            .ok_or_else(|| CoreError::invalid(format!("unknown parameter path '{path}'")))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.params.contains_key(path)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// One bias-corrected Adam update over every parameter, consuming the
    /// gradients. A parameter without a gradient is an error naming its path.
    pub fn adam_step(
        &mut self,
        grads: &mut Gradients,
        lr: f64,
        betas: (f64, f64),
        eps: f64,
    ) -> Result<()> {
        self.adam_step_where(grads, lr, betas, eps, |_| true)
    }

    /// Adam over the parameters whose path satisfies `select`; the rest keep
    /// value, moments, and step untouched (stage-wise training). Selected
    /// parameters must all have gradients.
    pub fn adam_step_where(
        &mut self,
        grads: &mut Gradients,
        lr: f64,
        betas: (f64, f64),
        eps: f64,
        select: impl Fn(&str) -> bool,
    ) -> Result<()> {
        let (b1, b2) = betas;
        for (path, p) in self.params.iter_mut() {
            if !select(path) {
                continue;
            }
            let g = grads
                .take_id(p.value.id())
                .ok_or_else(|| CoreError::MissingGrad { path: path.clone() })?;
            p.step += 1;
            let bc1 = 1.0 - libm::pow(b1, p.step as f64);
            let bc2 = 1.0 - libm::pow(b2, p.step as f64);
            let mut data = p.value.data().to_vec();
            for i in 0..data.len() {
                p.m[i] = b1 * p.m[i] + (1.0 - b1) * g[i];
                p.v[i] = b2 * p.v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = p.m[i] / bc1;
                let v_hat = p.v[i] / bc2;
                data[i] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
            p.value = Tensor::param(data, p.value.shape().to_vec())?;
        }
        Ok(())
    }

    /// Iterate (path, shape, value, m, v, step) in path order; the
    /// serialization order of checkpoints.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[usize], &[f64], &[f64], &[f64], u64)> {
        self.params.iter().map(|(path, p)| {
            (
                path.as_str(),
                p.value.shape(),
                p.value.data(),
                p.m.as_slice(),
                p.v.as_slice(),
                p.step,
            )
        })
    }

    /// Overwrite one parameter's value and optimizer state; used by
    /// checkpoint restore. Shape must match the registered parameter.
    pub fn restore(
        &mut self,
        path: &str,
        value: Vec<f64>,
        m: Vec<f64>,
        v: Vec<f64>,
        step: u64,
    ) -> Result<()> {
        let p = self
            .params
            .get_mut(path)
            .ok_or_else(|| CoreError::invalid(format!("unknown parameter path '{path}'")))?;
        if value.len() != p.value.len() || m.len() != value.len() || v.len() != value.len() {
            return Err(CoreError::invalid(format!(
                "restore '{path}': length mismatch"
            )));
        }
        p.value = Tensor::param(value, p.value.shape().to_vec())?;
        p.m = m;
        p.v = v;
        p.step = step;
        Ok(())
    }
}
