//! Small MLP building block whose parameters live in a `ParamStore`.
//!
//! The store re-creates parameter leaves on every optimizer step, so modules
//! hold only paths and dimensions and fetch fresh handles each forward pass.

use crate::error::Result;
use crate::rng::RngStream;
use crate::tensor::{ops, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Silu,
    Tanh,
}

/// Fully connected net: dims[0] → … → dims.last(), activation on hidden
/// layers only. Weight (in, out) matrices are N(0, √(2/fan_in)); biases zero.
#[derive(Debug, Clone)]
pub struct Mlp {
    prefix: String,
    dims: Vec<usize>,
    act: Act,
}

impl Mlp {
    /// Registers parameters under `{prefix}.l{layer}.{w,b}`. `zero_last`
    /// zero-initializes the final linear layer (identity-at-init flows).
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        dims: &[usize],
        act: Act,
        zero_last: bool,
        rng: &mut RngStream,
    ) -> Result<Mlp> {
        assert!(dims.len() >= 2, "an MLP needs at least one linear layer");
        for (l, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = libm::sqrt(2.0 / fan_in as f64);
            let last = l == dims.len() - 2;
            let w = if zero_last && last {
                vec![0.0; fan_in * fan_out]
            } else {
                (0..fan_in * fan_out).map(|_| rng.normal(0.0, std)).collect()
            };
            store.insert(&format!("{prefix}.l{l}.w"), w, vec![fan_in, fan_out])?;
            store.insert(&format!("{prefix}.l{l}.b"), vec![0.0; fan_out], vec![fan_out])?;
        }
        Ok(Mlp {
            prefix: prefix.to_string(),
            dims: dims.to_vec(),
            act,
        })
    }

    /// Handle onto already-stored parameters (checkpoint loading); forward
    /// passes fail if the store lacks the paths.
    pub fn attach(prefix: &str, dims: &[usize], act: Act) -> Mlp {
        assert!(dims.len() >= 2, "an MLP needs at least one linear layer");
        Mlp {
            prefix: prefix.to_string(),
            dims: dims.to_vec(),
            act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// x: (B, dims[0]) → (B, dims.last()).
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let layers = self.dims.len() - 1;
        for l in 0..layers {
            let w = store.get(&format!("{}.l{l}.w", self.prefix))?;
            let b = store.get(&format!("{}.l{l}.b", self.prefix))?;
            h = ops::add(&ops::matmul(&h, &w)?, &b)?;
            if l + 1 < layers {
                h = match self.act {
                    Act::Silu => ops::silu(&h)?,
                    Act::Tanh => ops::tanh(&h)?,
                };
            }
        }
        Ok(h)
    }
}
