//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Tensors are immutable; ops build a computation graph by keeping reference-
//! counted handles to their inputs together with a backward closure.
//! [`backward`] walks that graph once in reverse topological order and returns
//! per-leaf gradients. Shapes are rank 0 (scalar), 1 (vector), or 2 (matrix);
//! elementwise ops broadcast only over a leading batch dimension.

pub mod ops;

mod autograd;
mod distrib;
mod kernels;
mod params;

pub use autograd::{backward, Gradients};
pub use distrib::{gaussian_log_prob, kl_diag_gaussians, reparam_sample, STD_FLOOR};
pub use params::ParamStore;

use crate::error::{CoreError, Result};
use crate::rng::RngStream;
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);
static DEBUG_CHECKS: AtomicBool = AtomicBool::new(false);

/// When enabled, every op output is scanned for NaN/Inf and rejected with an
/// error naming the op. Creation-time inputs are always checked.
pub fn set_debug_checks(on: bool) {
    DEBUG_CHECKS.store(on, Ordering::Relaxed);
}

pub(crate) fn debug_checks() -> bool {
    DEBUG_CHECKS.load(Ordering::Relaxed)
}

/// Per-parent gradient contributions returned by a backward closure; `None`
/// for parents that do not require gradients.
pub(crate) type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Vec<f64>>>>;

pub(crate) struct OpNode {
    pub(crate) name: &'static str,
    pub(crate) parents: Vec<Tensor>,
    pub(crate) backward: BackwardFn,
}

pub(crate) struct BackwardCtx<'a> {
    pub(crate) grad_out: &'a [f64],
    pub(crate) out_data: &'a [f64],
    pub(crate) parents: &'a [Tensor],
}

impl BackwardCtx<'_> {
    /// Whether parent `i` needs a gradient at all.
    pub(crate) fn needs(&self, i: usize) -> bool {
        self.parents[i].requires_grad()
    }
}

pub(crate) struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    op: Option<OpNode>,
}

/// Immutable dense array of f64 with an optional autodiff history.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field(
                "data",
                &if self.inner.data.len() <= 8 {
                    format!("{:?}", self.inner.data)
                } else {
                    format!("[{} values]", self.inner.data.len())
                },
            )
            .finish()
    }
}

fn check_finite(data: &[f64], context: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite {
            context: context.to_string(),
        })
    }
}

impl Tensor {
    fn build(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Option<OpNode>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                op,
            }),
        }
    }

    /// New constant tensor (no gradient tracking). Rejects NaN/Inf and
    /// shape/data length disagreement.
    pub fn from_vec(data: Vec<f64>, shape: Vec<usize>) -> Result<Tensor> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(CoreError::invalid(format!(
                "from_vec: shape {:?} wants {} values, got {}",
                shape,
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        check_finite(&data, "from_vec")?;
        Ok(Tensor::build(data, shape, false, None))
    }

    /// New leaf parameter: gradient-tracked tensor with no history.
    pub fn param(data: Vec<f64>, shape: Vec<usize>) -> Result<Tensor> {
        let t = Tensor::from_vec(data, shape)?;
        Ok(Tensor::build(
            t.inner.data.clone(),
            t.inner.shape.clone(),
            true,
            None,
        ))
    }

    pub fn scalar(v: f64) -> Result<Tensor> {
        Tensor::from_vec(vec![v], vec![])
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::build(vec![0.0; n], shape, false, None)
    }

    /// Constant tensor of iid standard normals drawn from `rng`.
    pub fn randn(shape: Vec<usize>, rng: &mut RngStream) -> Tensor {
        let n = shape.iter().product();
        Tensor::build(rng.normal_vec(n), shape, false, None)
    }

    pub(crate) fn from_op(
        data: Vec<f64>,
        shape: Vec<usize>,
        name: &'static str,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Result<Tensor> {
        if debug_checks() {
            check_finite(&data, name)?;
        }
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let op = requires_grad.then(|| OpNode {
            name,
            parents,
            backward,
        });
        Ok(Tensor::build(data, shape, requires_grad, op))
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.id
    }

    pub(crate) fn op(&self) -> Option<&OpNode> {
        self.inner.op.as_ref()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data[0]
    }

    /// Number of rows when interpreted as a batch: size of the leading dim,
    /// or 1 for scalars/vectors.
    pub fn rows(&self) -> usize {
        if self.inner.shape.len() == 2 {
            self.inner.shape[0]
        } else {
            1
        }
    }

    /// Same values, detached from the autodiff graph.
    pub fn detach(&self) -> Tensor {
        Tensor::build(
            self.inner.data.clone(),
            self.inner.shape.clone(),
            false,
            None,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn creation_validates_shape_and_finiteness() {
        assert!(Tensor::from_vec(vec![1.0, 2.0], vec![3]).is_err());
        assert!(Tensor::from_vec(vec![f64::NAN], vec![1]).is_err());
        assert!(Tensor::from_vec(vec![f64::INFINITY], vec![1]).is_err());
        let t = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], vec![2, 2]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert!(!t.requires_grad());
        assert!(Tensor::param(vec![0.0], vec![1]).unwrap().requires_grad());
    }

    #[test]
    fn debug_flag_catches_nonfinite_op_output() {
        set_debug_checks(true);
        let a = Tensor::from_vec(vec![-1.0], vec![1]).unwrap();
        let r = ops::log(&a);
        set_debug_checks(false);
        assert!(r.is_err());
    }
}
