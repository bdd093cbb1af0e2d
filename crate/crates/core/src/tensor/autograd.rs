//! Reverse-mode gradient computation over the recorded op graph.

use super::Tensor;
use crate::error::{CoreError, Result};
use std::collections::{HashMap, HashSet};

/// Gradients keyed by tensor identity, produced by [`backward`]. Only leaf
/// tensors (parameters and other tracked inputs) are retained.
pub struct Gradients {
    by_id: HashMap<u64, Vec<f64>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `t`, if `t` is a tracked leaf
    /// reachable from the loss.
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.by_id.get(&t.id()).map(|v| v.as_slice())
    }

    pub(crate) fn take_id(&mut self, id: u64) -> Option<Vec<f64>> {
        self.by_id.remove(&id)
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// Depth-first postorder over the op graph; parents precede children, and the
/// traversal order is a pure function of graph structure.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    // (tensor, parents_pushed)
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !seen.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(op) = t.op() {
            for p in op.parents.iter().rev() {
                if p.requires_grad() && !seen.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }
    order
}

fn axpy(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Accumulate d(loss)/d(leaf) for every tracked leaf reachable from `loss`.
/// Gradients add across multiple uses of the same tensor.
pub fn backward(loss: &Tensor) -> Result<Gradients> {
    if loss.len() != 1 {
        return Err(CoreError::invalid(format!(
            "backward: loss must be scalar, got shape {:?}",
            loss.shape()
        )));
    }
    if !loss.requires_grad() {
        return Err(CoreError::invalid(
            "backward: loss does not depend on any tracked tensor",
        ));
    }
    let order = topo_order(loss);
    let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
    grads.insert(loss.id(), vec![1.0]);

    for t in order.iter().rev() {
        let Some(op) = t.op() else { continue };
        // All consumers of t were already processed, so its grad is final;
        // interior grads are dropped as they are consumed.
        let Some(g) = grads.remove(&t.id()) else {
            continue;
        };
        let ctx = super::BackwardCtx {
            grad_out: &g,
            out_data: t.data(),
            parents: &op.parents,
        };
        let contribs = (op.backward)(&ctx);
        debug_assert_eq!(contribs.len(), op.parents.len());
        for (p, c) in op.parents.iter().zip(contribs) {
            let Some(c) = c else { continue };
            debug_assert_eq!(c.len(), p.len(), "grad shape for {}", op.name);
            match grads.entry(p.id()) {
                std::collections::hash_map::Entry::Occupied(mut e) => axpy(e.get_mut(), &c),
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(c);
                }
            }
        }
    }
    Ok(Gradients { by_id: grads })
}
