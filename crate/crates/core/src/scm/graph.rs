//! Time-lagged causal graph over K variables.

use crate::error::{CoreError, Result};
use crate::rng::RngStream;

/// Binary adjacency mask; `mask[i][j] = 1` iff C_j at time t−1 is a parent of
/// C_i at time t. There are no within-timestep edges. Every variable has at
/// least one parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    k: usize,
    mask: Vec<u8>,
}

impl CausalGraph {
    /// Build from an explicit row-major mask.
    pub fn from_mask(k: usize, mask: Vec<u8>) -> Result<Self> {
        if mask.len() != k * k {
            return Err(CoreError::invalid(format!(
                "graph mask length {} for K={k}",
                mask.len()
            )));
        }
        if !mask.iter().all(|&m| m <= 1) {
            return Err(CoreError::invalid("graph mask entries must be 0/1"));
        }
        let g = CausalGraph { k, mask };
        for i in 0..k {
            if g.parent_count(i) == 0 {
                return Err(CoreError::invalid(format!(
                    "variable {i} has no parent"
                )));
            }
        }
        Ok(g)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_edge(&self, child: usize, parent: usize) -> bool {
        self.mask[child * self.k + parent] == 1
    }

    /// Row i of the mask: which C_j^{t−1} feed C_i^t.
    pub fn row(&self, i: usize) -> &[u8] {
        &self.mask[i * self.k..(i + 1) * self.k]
    }

    pub fn parent_count(&self, i: usize) -> usize {
        self.row(i).iter().map(|&m| m as usize).sum()
    }

    pub fn parents(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 1)
            .map(|(j, _)| j)
    }

    /// Rows as vectors, for the dataset manifest.
    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.k).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Sample each edge independently with probability `edge_prob`; any variable
/// left without parents gets one uniformly chosen parent.
pub fn sample_graph(k: usize, edge_prob: f64, rng: &mut RngStream) -> Result<CausalGraph> {
    if k < 2 {
        return Err(CoreError::invalid("sample_graph: K must be ≥ 2"));
    }
    if !(0.0..1.0).contains(&edge_prob) || edge_prob <= 0.0 {
        return Err(CoreError::invalid("sample_graph: edge_prob must be in (0,1)"));
    }
    let mut mask = vec![0u8; k * k];
    for e in mask.iter_mut() {
        *e = rng.bernoulli(edge_prob) as u8;
    }
    for i in 0..k {
        let row = &mut mask[i * k..(i + 1) * k];
        if row.iter().all(|&m| m == 0) {
            row[rng.below(k as u64) as usize] = 1;
        }
    }
    CausalGraph::from_mask(k, mask)
}
