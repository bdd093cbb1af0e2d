//! Nonparametric dependence scores between causal variables and latents.
//!
//! The R² regressor is deliberately assumption-free: a 1-D k-nearest-neighbor
//! fit captures any component-wise invertible relationship, which is exactly
//! the equivalence class identification is judged against. Spearman rank
//! correlation (absolute value) backs it up as a second opinion that absorbs
//! sign flips for free.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const KNN_NEIGHBORS: usize = 25;
/// Held-out variance below this marks a latent dimension as unused; such
/// columns never become assignment candidates.
pub const DEAD_LATENT_VARIANCE: f64 = 1e-4;
/// Fewer evaluation rows than this leaves the 50/50 regression split too
/// noisy to trust.
pub const MIN_ROWS: usize = 200;

/// R²_{ij} of predicting causal variable i from latent j, K rows × M columns,
/// each entry clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Matrix {
    k: usize,
    m: usize,
    entries: Vec<f64>,
    active: Vec<bool>,
}

impl R2Matrix {
    /// Wrap explicit entries (all columns active). Entries may be negative —
    /// uncorrelated pairs regress below zero — but never exceed 1.
    pub fn from_entries(k: usize, m: usize, entries: Vec<f64>) -> Result<R2Matrix> {
        if k == 0 || m == 0 || entries.len() != k * m {
            return Err(CoreError::invalid(format!(
                "R² matrix needs k·m = {}·{} entries, got {}",
                k,
                m,
                entries.len()
            )));
        }
        if !entries.iter().all(|&e| e.is_finite() && e <= 1.0 + 1e-9) {
            return Err(CoreError::invalid("R² entries must be finite and ≤ 1"));
        }
        Ok(R2Matrix {
            k,
            m,
            entries,
            active: vec![true; m],
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    /// Which latent columns carried held-out variance (assignment candidates).
    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("causal");
        for j in 0..self.m {
            out.push_str(&format!(",latent_{j}"));
        }
        out.push('\n');
        for i in 0..self.k {
            out.push_str(&format!("{i}"));
            for j in 0..self.m {
                out.push_str(&format!(",{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

fn column(data: &[f64], cols: usize, j: usize) -> Vec<f64> {
    data.iter().skip(j).step_by(cols).copied().collect()
}

fn variance(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64
}

/// Mean of the `k` training targets whose inputs lie nearest to `q` in 1-D.
/// `pairs` is sorted by input value.
fn knn_predict(pairs: &[(f64, f64)], q: f64, k: usize) -> f64 {
    let n = pairs.len();
    let start = pairs.partition_point(|&(z, _)| z < q);
    let (mut lo, mut hi) = (start, start);
    let mut sum = 0.0;
    for _ in 0..k.min(n) {
        let take_lo = if lo == 0 {
            false
        } else if hi == n {
            true
        } else {
            q - pairs[lo - 1].0 <= pairs[hi].0 - q
        };
        if take_lo {
            lo -= 1;
            sum += pairs[lo].1;
        } else {
            sum += pairs[hi].1;
            hi += 1;
        }
    }
    sum / k.min(n) as f64
}

/// Held-out R² of a kNN regression from latent values `z` to causal values
/// `c`: first half trains, second half scores. Negative scores clamp to 0.
fn knn_r2(z: &[f64], c: &[f64], neighbors: usize) -> Result<f64> {
    let half = z.len() / 2;
    let mut train: Vec<(f64, f64)> = z[..half].iter().copied().zip(c[..half].iter().copied()).collect();
    train.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let (z_eval, c_eval) = (&z[half..], &c[half..]);

    let mean = c_eval.iter().sum::<f64>() / c_eval.len() as f64;
    let sst: f64 = c_eval.iter().map(|&y| (y - mean) * (y - mean)).sum();
    if sst == 0.0 {
        return Err(CoreError::invalid(
            "causal variable has zero variance on the held-out half",
        ));
    }
    let sse: f64 = z_eval
        .iter()
        .zip(c_eval)
        .map(|(&q, &y)| {
            let p = knn_predict(&train, q, neighbors);
            (p - y) * (p - y)
        })
        .sum();
    Ok((1.0 - sse / sst).max(0.0))
}

/// R² of every (causal variable, latent) pair. `latents` is T×M row-major,
/// `causals` T×K. Requires T ≥ 200 and finite inputs; errors on a
/// zero-variance causal variable.
pub fn r2_matrix(latents: &[f64], m: usize, causals: &[f64], k: usize) -> Result<R2Matrix> {
    r2_matrix_with(latents, m, causals, k, KNN_NEIGHBORS, DEAD_LATENT_VARIANCE)
}

/// [`r2_matrix`] with the neighbor count and dead-column variance threshold
/// exposed.
pub fn r2_matrix_with(
    latents: &[f64],
    m: usize,
    causals: &[f64],
    k: usize,
    neighbors: usize,
    dead_variance: f64,
) -> Result<R2Matrix> {
    if neighbors == 0 {
        return Err(CoreError::invalid("kNN needs at least one neighbor"));
    }
    if !dead_variance.is_finite() || dead_variance < 0.0 {
        return Err(CoreError::invalid(
            "dead-latent variance threshold must be finite and ≥ 0",
        ));
    }
    if m == 0 || k == 0 || latents.len() % m != 0 {
        return Err(CoreError::invalid("latents length must be a multiple of m"));
    }
    let rows = latents.len() / m;
    if causals.len() != rows * k {
        return Err(CoreError::invalid(format!(
            "causals length {} does not match {rows} rows × {k}",
            causals.len()
        )));
    }
    if rows < MIN_ROWS {
        return Err(CoreError::invalid(format!(
            "R² evaluation needs ≥ {MIN_ROWS} rows, got {rows}"
        )));
    }
    if !latents.iter().chain(causals).all(|v| v.is_finite()) {
        return Err(CoreError::NonFinite {
            context: "r2_matrix inputs".into(),
        });
    }

    let half = rows / 2;
    let c_cols: Vec<Vec<f64>> = (0..k).map(|i| column(causals, k, i)).collect();
    for (i, c) in c_cols.iter().enumerate() {
        if variance(c) == 0.0 {
            return Err(CoreError::invalid(format!(
                "causal variable {i} has zero variance"
            )));
        }
    }
    let z_cols: Vec<Vec<f64>> = (0..m).map(|j| column(latents, m, j)).collect();
    let active: Vec<bool> = z_cols
        .iter()
        .map(|z| variance(&z[half..]) >= dead_variance)
        .collect();

    let mut entries = Vec::with_capacity(k * m);
    for c in &c_cols {
        for z in &z_cols {
            entries.push(knn_r2(z, c, neighbors)?);
        }
    }
    Ok(R2Matrix {
        k,
        m,
        entries,
        active,
    })
}

/// Ranks with ties averaged, 1-based.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_unstable_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s;
        while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
            e += 1;
        }
        let avg = (s + e) as f64 / 2.0 + 1.0;
        for &t in &idx[s..=e] {
            out[t] = avg;
        }
        s = e + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0; // a constant column carries no rank information
    }
    cov / (va * vb).sqrt()
}

/// Absolute Spearman rank correlation of every (causal, latent) pair,
/// K×M row-major. Constant columns score 0.
pub fn spearman_matrix(latents: &[f64], m: usize, causals: &[f64], k: usize) -> Result<Vec<f64>> {
    if m == 0 || k == 0 || latents.len() % m != 0 {
        return Err(CoreError::invalid("latents length must be a multiple of m"));
    }
    let rows = latents.len() / m;
    if causals.len() != rows * k || rows < 2 {
        return Err(CoreError::invalid("Spearman needs matching T×M / T×K inputs"));
    }
    let z_ranks: Vec<Vec<f64>> = (0..m).map(|j| ranks(&column(latents, m, j))).collect();
    let c_ranks: Vec<Vec<f64>> = (0..k).map(|i| ranks(&column(causals, k, i))).collect();
    let mut out = Vec::with_capacity(k * m);
    for c in &c_ranks {
        for z in &z_ranks {
            out.push(pearson(c, z).abs());
        }
    }
    Ok(out)
}
