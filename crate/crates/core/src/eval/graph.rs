//! Temporal graph discovery among aligned latents.
//!
//! Edge directions are known up front (everything points t−1 → t), so
//! discovery reduces to a feature-selection problem per target: fit a small
//! gated predictor of each latent from the full previous-step vector with an
//! L1 penalty on the input gates, then keep the gates that survive.

use crate::error::{CoreError, Result};
use crate::model::nn::{Act, Mlp};
use crate::rng::RngStream;
use crate::tensor::{backward, ops, ParamStore, Tensor};

/// Gates are kept as edges when they exceed this fraction of the largest
/// gate magnitude across all targets.
pub const GATE_FRACTION: f64 = 0.1;
const L1_WEIGHT: f64 = 0.02;
const HIDDEN: usize = 16;
const EPOCHS: usize = 80;
const BATCH: usize = 512;
const LEARNING_RATE: f64 = 5e-3;

fn standardize_columns(data: &[f64], cols: usize) -> Result<Vec<f64>> {
    let rows = data.len() / cols;
    let mut out = data.to_vec();
    for j in 0..cols {
        let col: Vec<f64> = data.iter().skip(j).step_by(cols).copied().collect();
        let mean = col.iter().sum::<f64>() / rows as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / rows as f64;
        if var < 1e-12 {
            return Err(CoreError::invalid(format!(
                "latent column {j} is constant; graph discovery needs variance"
            )));
        }
        let std = var.sqrt();
        for t in 0..rows {
            out[t * cols + j] = (data[t * cols + j] - mean) / std;
        }
    }
    Ok(out)
}

/// |g| with the exact L1 subgradient (sign, zero at zero).
fn l1(g: &Tensor) -> Result<Tensor> {
    ops::mean_all(&ops::add(&ops::relu(g)?, &ops::relu(&ops::neg(g)?)?)?)
}

/// Train one gated predictor of target column `target` and return the
/// absolute gate values.
fn fit_gates(prev: &[f64], next: &[f64], k: usize, target: usize, rng: &RngStream) -> Result<Vec<f64>> {
    let rows = prev.len() / k;
    let mut store = ParamStore::new();
    store.insert("gate", vec![1.0; k], vec![k])?;
    let net = Mlp::init(
        &mut store,
        "net",
        &[k, HIDDEN, 1],
        Act::Silu,
        false,
        &mut rng.split("init", 0),
    )?;
    let y: Vec<f64> = next.iter().skip(target).step_by(k).copied().collect();

    let mut order: Vec<usize> = (0..rows).collect();
    for epoch in 0..EPOCHS {
        rng.split("shuffle", epoch as u64).shuffle(&mut order);
        for batch in order.chunks(BATCH) {
            let mut xb = Vec::with_capacity(batch.len() * k);
            let mut yb = Vec::with_capacity(batch.len());
            for &t in batch {
                xb.extend_from_slice(&prev[t * k..(t + 1) * k]);
                yb.push(y[t]);
            }
            let x = Tensor::from_vec(xb, vec![batch.len(), k])?;
            let target_col = Tensor::from_vec(yb, vec![batch.len(), 1])?;

            let gate = store.get("gate")?;
            let pred = net.forward(&store, &ops::mul(&x, &gate)?)?;
            let diff = ops::sub(&pred, &target_col)?;
            let mse = ops::mean_all(&ops::mul(&diff, &diff)?)?;
            let loss = ops::add(&mse, &ops::scale(&l1(&gate)?, L1_WEIGHT)?)?;

            let mut grads = backward(&loss)?;
            store.adam_step(&mut grads, LEARNING_RATE, (0.9, 0.999), 1e-8)?;
        }
    }
    Ok(store.get("gate")?.data().iter().map(|g| g.abs()).collect())
}

/// Discover which latents at t−1 drive each latent at t. `prev` and `next`
/// are T×K row-major aligned latent values (row t of `next` is the successor
/// of row t of `prev`). Returns a row-major K×K mask: entry (i, j) = 1 iff
/// column j of the previous step feeds column i of the next.
pub fn discover_graph(prev: &[f64], next: &[f64], k: usize, seed: u64) -> Result<Vec<u8>> {
    discover_graph_with(prev, next, k, seed, GATE_FRACTION)
}

/// [`discover_graph`] with the edge-keeping threshold fraction exposed.
pub fn discover_graph_with(
    prev: &[f64],
    next: &[f64],
    k: usize,
    seed: u64,
    gate_fraction: f64,
) -> Result<Vec<u8>> {
    if !(gate_fraction > 0.0 && gate_fraction < 1.0) {
        return Err(CoreError::invalid(
            "gate fraction must lie strictly between 0 and 1",
        ));
    }
    if k == 0 || prev.len() % k != 0 || prev.len() != next.len() {
        return Err(CoreError::invalid(
            "graph discovery needs matching T×K prev/next arrays",
        ));
    }
    let rows = prev.len() / k;
    if rows < 100 {
        return Err(CoreError::invalid(format!(
            "graph discovery needs ≥ 100 transitions, got {rows}"
        )));
    }
    if !prev.iter().chain(next).all(|v| v.is_finite()) {
        return Err(CoreError::NonFinite {
            context: "discover_graph inputs".into(),
        });
    }
    let prev_std = standardize_columns(prev, k)?;
    let next_std = standardize_columns(next, k)?;

    let root = RngStream::new(seed);
    let mut gates = Vec::with_capacity(k);
    for i in 0..k {
        gates.push(fit_gates(
            &prev_std,
            &next_std,
            k,
            i,
            &root.split("target", i as u64),
        )?);
    }

    let max = gates
        .iter()
        .flatten()
        .copied()
        .fold(0.0_f64, f64::max);
    let threshold = gate_fraction * max;
    let mut mask = vec![0u8; k * k];
    for i in 0..k {
        for j in 0..k {
            mask[i * k + j] = (gates[i][j] > threshold) as u8;
        }
    }
    Ok(mask)
}

/// Structural Hamming distance between two binary adjacency masks of equal
/// size: the number of entries where they disagree.
pub fn shd(a: &[u8], b: &[u8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(CoreError::invalid(format!(
            "SHD needs equal-size masks, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !a.iter().chain(b).all(|&e| e <= 1) {
        return Err(CoreError::invalid("SHD masks must be binary"));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}
