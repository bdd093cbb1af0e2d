//! Ground-truth transition mechanisms: one fixed randomly initialized MLP per
//! variable, plus additive Gaussian noise.
//!
//! Each MLP has three linear layers with tanh hidden activations. After the
//! first two layers sits a fixed affine normalization whose constants are
//! computed once at initialization from 1024 warm-up samples, then frozen, so
//! the mechanism is a time-invariant deterministic function plus noise.

use super::graph::CausalGraph;
use crate::error::{CoreError, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone)]
struct MechNet {
    w1: Vec<f64>, // k×h, row-major (unit u reads w1[u*k..])
    b1: Vec<f64>,
    norm1: Vec<(f64, f64)>, // per-unit (scale, shift)
    w2: Vec<f64>, // h×h
    b2: Vec<f64>,
    norm2: Vec<(f64, f64)>,
    w3: Vec<f64>, // h
    b3: f64,
    k: usize,
    h: usize,
}

impl MechNet {
    fn layer1(&self, x: &[f64], out: &mut [f64]) {
        for u in 0..self.h {
            let w = &self.w1[u * self.k..(u + 1) * self.k];
            let mut acc = self.b1[u];
            for (wv, xv) in w.iter().zip(x) {
                acc += wv * xv;
            }
            out[u] = acc;
        }
    }

    fn layer2(&self, x: &[f64], out: &mut [f64]) {
        for u in 0..self.h {
            let w = &self.w2[u * self.h..(u + 1) * self.h];
            let mut acc = self.b2[u];
            for (wv, xv) in w.iter().zip(x) {
                acc += wv * xv;
            }
            out[u] = acc;
        }
    }

    /// Deterministic mean function of the masked previous state.
    fn eval(&self, x: &[f64]) -> f64 {
        let mut h1 = vec![0.0; self.h];
        self.layer1(x, &mut h1);
        for (v, &(a, b)) in h1.iter_mut().zip(&self.norm1) {
            *v = libm::tanh(a * *v + b);
        }
        let mut h2 = vec![0.0; self.h];
        self.layer2(&h1, &mut h2);
        for (v, &(a, b)) in h2.iter_mut().zip(&self.norm2) {
            *v = libm::tanh(a * *v + b);
        }
        let mut acc = self.b3;
        for (w, h) in self.w3.iter().zip(&h2) {
            acc += w * h;
        }
        acc
    }
}

/// All K per-variable mechanisms plus the shared noise scale.
#[derive(Debug, Clone)]
pub struct Mechanism {
    nets: Vec<MechNet>,
    noise_std: f64,
    k: usize,
}

const WARMUP_SAMPLES: usize = 1024;
const NORM_EPS: f64 = 1e-8;

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

impl Mechanism {
    /// Initialize all K nets. Weights are N(0, 2/fan_in); the warm-up batch
    /// that fixes the normalization constants is drawn masked by each
    /// variable's parent row, matching what the net sees at simulation time.
    pub fn init(
        graph: &CausalGraph,
        hidden: usize,
        noise_std: f64,
        rng: &RngStream,
    ) -> Result<Mechanism> {
        if noise_std < 0.0 {
            return Err(CoreError::invalid("noise_std must be nonnegative"));
        }
        let k = graph.k();
        let mut nets = Vec::with_capacity(k);
        for i in 0..k {
            let mut wrng = rng.split("weights", i as u64);
            let std1 = libm::sqrt(2.0 / k as f64);
            let std2 = libm::sqrt(2.0 / hidden as f64);
            let mut net = MechNet {
                w1: (0..k * hidden).map(|_| wrng.normal(0.0, std1)).collect(),
                b1: vec![0.0; hidden],
                norm1: vec![(1.0, 0.0); hidden],
                w2: (0..hidden * hidden).map(|_| wrng.normal(0.0, std2)).collect(),
                b2: vec![0.0; hidden],
                norm2: vec![(1.0, 0.0); hidden],
                w3: (0..hidden).map(|_| wrng.normal(0.0, std2)).collect(),
                b3: 0.0,
                k,
                h: hidden,
            };

            // Warm-up pass 1: normalize first-layer pre-activations.
            let mut wurng = rng.split("warmup", i as u64);
            let mask = graph.row(i);
            let samples: Vec<Vec<f64>> = (0..WARMUP_SAMPLES)
                .map(|_| {
                    (0..k)
                        .map(|j| {
                            let v = wurng.standard_normal();
                            if mask[j] == 1 {
                                v
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect();
            let mut pre1 = vec![vec![0.0; hidden]; WARMUP_SAMPLES];
            for (s, p) in samples.iter().zip(pre1.iter_mut()) {
                net.layer1(s, p);
            }
            for u in 0..hidden {
                let col: Vec<f64> = pre1.iter().map(|p| p[u]).collect();
                let (mean, var) = moments(&col);
                let scale = 1.0 / libm::sqrt(var + NORM_EPS);
                net.norm1[u] = (scale, -mean * scale);
            }

            // Warm-up pass 2: with norm1 live, normalize second-layer
            // pre-activations.
            let mut pre2 = vec![vec![0.0; hidden]; WARMUP_SAMPLES];
            for (s, p) in samples.iter().zip(pre2.iter_mut()) {
                let mut h1 = vec![0.0; hidden];
                net.layer1(s, &mut h1);
                for (v, &(a, b)) in h1.iter_mut().zip(&net.norm1) {
                    *v = libm::tanh(a * *v + b);
                }
                net.layer2(&h1, p);
            }
            for u in 0..hidden {
                let col: Vec<f64> = pre2.iter().map(|p| p[u]).collect();
                let (mean, var) = moments(&col);
                let scale = 1.0 / libm::sqrt(var + NORM_EPS);
                net.norm2[u] = (scale, -mean * scale);
            }

            nets.push(net);
        }
        Ok(Mechanism {
            nets,
            noise_std,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Mean of C_i^t given the full previous state: the MLP applied to
    /// C_prev masked by variable i's parent row.
    pub fn mean(&self, i: usize, c_prev: &[f64], graph: &CausalGraph) -> f64 {
        debug_assert_eq!(c_prev.len(), self.k);
        let mask = graph.row(i);
        let masked: Vec<f64> = c_prev
            .iter()
            .zip(mask)
            .map(|(&c, &m)| if m == 1 { c } else { 0.0 })
            .collect();
        self.nets[i].eval(&masked)
    }
}

/// One simulation step: C_i^t = (I_i == 0 ? MLP_i(C_prev ⊙ M_i) : 0) + ε with
/// ε ~ N(0, noise_std²). Noise for component i comes from a fixed-purpose
/// child of `rng`, so the call is a pure function; pass a distinct stream per
/// timestep.
pub fn step(
    c_prev: &[f64],
    interactions: &[u8],
    mech: &Mechanism,
    graph: &CausalGraph,
    rng: &RngStream,
) -> Vec<f64> {
    debug_assert_eq!(c_prev.len(), mech.k);
    debug_assert_eq!(interactions.len(), mech.k);
    (0..mech.k)
        .map(|i| {
            let mean = if interactions[i] == 0 {
                mech.mean(i, c_prev, graph)
            } else {
                0.0
            };
            mean + rng.split("component", i as u64).normal(0.0, mech.noise_std)
        })
        .collect()
}
