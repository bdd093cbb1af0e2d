//! Invertible observation map: causal variables C are not observed directly;
//! the benchmark emits X = entangle(C), a fixed random diffeomorphism built
//! from affine coupling layers and orthogonal mixing. Exact `inverse` exists
//! for evaluation oracles.

use crate::error::{CoreError, Result};
use crate::linalg::random_orthogonal;
use crate::rng::RngStream;

const HIDDEN: usize = 16;

/// One hidden-layer tanh net `d_in → HIDDEN → 2·d_out` emitting per-dimension
/// (raw_scale, shift). Scale is squashed as tanh(raw) so |log-scale| < 1 and
/// the map stays well-conditioned.
#[derive(Debug, Clone)]
struct CouplingNet {
    w1: Vec<f64>, // HIDDEN × d_in
    b1: Vec<f64>,
    w2: Vec<f64>, // 2·d_out × HIDDEN
    b2: Vec<f64>,
    d_in: usize,
    d_out: usize,
}

impl CouplingNet {
    fn init(d_in: usize, d_out: usize, rng: &mut RngStream) -> Self {
        let std1 = libm::sqrt(2.0 / d_in as f64);
        let std2 = libm::sqrt(2.0 / HIDDEN as f64);
        CouplingNet {
            w1: (0..HIDDEN * d_in).map(|_| rng.normal(0.0, std1)).collect(),
            b1: vec![0.0; HIDDEN],
            w2: (0..2 * d_out * HIDDEN).map(|_| rng.normal(0.0, std2)).collect(),
            b2: vec![0.0; 2 * d_out],
            d_in,
            d_out,
        }
    }

    /// Identity map parameters: zero scale and shift regardless of input.
    fn zero(d_in: usize, d_out: usize) -> Self {
        CouplingNet {
            w1: vec![0.0; HIDDEN * d_in],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; 2 * d_out * HIDDEN],
            b2: vec![0.0; 2 * d_out],
            d_in,
            d_out,
        }
    }

    /// Returns (log_scales, shifts), each of length d_out.
    fn eval(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.d_in);
        let mut h = self.b1.clone();
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.w1[j * self.d_in..(j + 1) * self.d_in];
            let mut acc = *hj;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            *hj = libm::tanh(acc);
        }
        let mut raw = self.b2.clone();
        for (j, rj) in raw.iter_mut().enumerate() {
            let row = &self.w2[j * HIDDEN..(j + 1) * HIDDEN];
            let mut acc = *rj;
            for (w, v) in row.iter().zip(&h) {
                acc += w * v;
            }
            *rj = acc;
        }
        let log_scales = raw[..self.d_out].iter().map(|&r| libm::tanh(r)).collect();
        let shifts = raw[self.d_out..].to_vec();
        (log_scales, shifts)
    }
}

/// Affine coupling: the "a" half conditions an elementwise affine map applied
/// to the "b" half. `swap` flips which half is which.
#[derive(Debug, Clone)]
struct CouplingLayer {
    net: CouplingNet,
    d_a: usize,
    swap: bool,
}

/// Fixed invertible entangler: alternating coupling layers, each followed by
/// an orthogonal mix (volume preserving, so only couplings contribute to the
/// log-determinant).
#[derive(Debug, Clone)]
pub struct Entangler {
    layers: Vec<(CouplingLayer, Vec<f64>)>, // (coupling, dim×dim orthogonal Q)
    dim: usize,
}

pub const COUPLING_LAYERS: usize = 2;

impl Entangler {
    pub fn sample(dim: usize, rng: &mut RngStream) -> Result<Self> {
        if dim < 2 {
            return Err(CoreError::invalid("entangler needs dim ≥ 2"));
        }
        let d_a = dim.div_ceil(2);
        let d_b = dim - d_a;
        let mut layers = Vec::with_capacity(COUPLING_LAYERS);
        for l in 0..COUPLING_LAYERS {
            let mut net_rng = rng.split("coupling", l as u64);
            let net = CouplingNet::init(d_a, d_b, &mut net_rng);
            let mut q_rng = rng.split("mix", l as u64);
            let q = random_orthogonal(dim, &mut q_rng);
            layers.push((
                CouplingLayer {
                    net,
                    d_a,
                    swap: l % 2 == 1,
                },
                q,
            ));
        }
        Ok(Entangler { layers, dim })
    }

    /// X = C exactly: zero coupling nets and identity mixes. Used when the
    /// benchmark should expose the causal variables directly.
    pub fn identity(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(CoreError::invalid("entangler needs dim ≥ 2"));
        }
        let d_a = dim.div_ceil(2);
        let d_b = dim - d_a;
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        let layers = (0..COUPLING_LAYERS)
            .map(|l| {
                (
                    CouplingLayer {
                        net: CouplingNet::zero(d_a, d_b),
                        d_a,
                        swap: l % 2 == 1,
                    },
                    eye.clone(),
                )
            })
            .collect();
        Ok(Entangler { layers, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Maps C → X; also returns log|det J| of the whole map.
    pub fn forward(&self, c: &[f64]) -> Result<(Vec<f64>, f64)> {
        if c.len() != self.dim {
            return Err(CoreError::invalid(format!(
                "entangler expects dim {}, got {}",
                self.dim,
                c.len()
            )));
        }
        let mut x = c.to_vec();
        let mut log_det = 0.0;
        for (layer, q) in &self.layers {
            let (a, b) = split(&x, layer.d_a, layer.swap);
            let (log_s, t) = layer.net.eval(&a);
            let b_new: Vec<f64> = b
                .iter()
                .zip(log_s.iter().zip(&t))
                .map(|(&bv, (&ls, &tv))| bv * libm::exp(ls) + tv)
                .collect();
            log_det += log_s.iter().sum::<f64>();
            x = join(&a, &b_new, layer.swap);
            x = mat_vec(q, &x, self.dim);
        }
        Ok((x, log_det))
    }

    /// Exact inverse of `forward` (up to float round-off).
    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(CoreError::invalid(format!(
                "entangler expects dim {}, got {}",
                self.dim,
                x.len()
            )));
        }
        let mut c = x.to_vec();
        for (layer, q) in self.layers.iter().rev() {
            c = mat_t_vec(q, &c, self.dim); // Qᵀ = Q⁻¹
            let (a, b) = split(&c, layer.d_a, layer.swap);
            let (log_s, t) = layer.net.eval(&a);
            let b_orig: Vec<f64> = b
                .iter()
                .zip(log_s.iter().zip(&t))
                .map(|(&bv, (&ls, &tv))| (bv - tv) * libm::exp(-ls))
                .collect();
            c = join(&a, &b_orig, layer.swap);
        }
        Ok(c)
    }
}

/// Partition x into (conditioning half, transformed half). Without swap the
/// first d_a entries condition; with swap the last d_a entries do.
fn split(x: &[f64], d_a: usize, swap: bool) -> (Vec<f64>, Vec<f64>) {
    if swap {
        let d_b = x.len() - d_a;
        (x[d_b..].to_vec(), x[..d_b].to_vec())
    } else {
        (x[..d_a].to_vec(), x[d_a..].to_vec())
    }
}

fn join(a: &[f64], b: &[f64], swap: bool) -> Vec<f64> {
    if swap {
        let mut out = b.to_vec();
        out.extend_from_slice(a);
        out
    } else {
        let mut out = a.to_vec();
        out.extend_from_slice(b);
        out
    }
}

fn mat_vec(m: &[f64], x: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * dim..(i + 1) * dim];
        let mut acc = 0.0;
        for (w, v) in row.iter().zip(x) {
            acc += w * v;
        }
        *o = acc;
    }
    out
}

fn mat_t_vec(m: &[f64], x: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (j, &xv) in x.iter().enumerate() {
        let row = &m[j * dim..(j + 1) * dim];
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * xv;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_is_exact() {
        let e = Entangler::identity(6).unwrap();
        let c = vec![0.3, -1.2, 0.0, 2.5, -0.7, 0.1];
        let (x, log_det) = e.forward(&c).unwrap();
        assert_eq!(x, c);
        assert_eq!(log_det, 0.0);
        assert_eq!(e.inverse(&x).unwrap(), c);
    }

    #[test]
    fn round_trip_is_exact_to_1e8() {
        let mut rng = RngStream::new(11).split("entangler-test", 0);
        for dim in [2usize, 3, 6, 9] {
            let mut e_rng = rng.split("sample", dim as u64);
            let e = Entangler::sample(dim, &mut e_rng).unwrap();
            for _ in 0..1000 {
                let c = rng.normal_vec(dim);
                let (x, _) = e.forward(&c).unwrap();
                let back = e.inverse(&x).unwrap();
                for (orig, rec) in c.iter().zip(&back) {
                    assert!(
                        (orig - rec).abs() <= 1e-8,
                        "dim {dim}: {orig} vs {rec}"
                    );
                }
            }
        }
    }

    #[test]
    fn forward_actually_mixes_coordinates() {
        let mut rng = RngStream::new(5).split("entangler-mix", 0);
        let e = Entangler::sample(6, &mut rng).unwrap();
        let base = vec![0.0; 6];
        let (x0, _) = e.forward(&base).unwrap();
        // Perturbing one causal variable must move several observed dims.
        let mut c = base.clone();
        c[0] = 1.0;
        let (x1, _) = e.forward(&c).unwrap();
        let moved = x0
            .iter()
            .zip(&x1)
            .filter(|(a, b)| (*a - *b).abs() > 1e-6)
            .count();
        assert!(moved >= 3, "only {moved} observed dims moved");
    }

    #[test]
    fn log_det_matches_numeric_jacobian() {
        let mut rng = RngStream::new(23).split("entangler-jac", 0);
        for dim in [2usize, 3, 4] {
            let mut e_rng = rng.split("sample", dim as u64);
            let e = Entangler::sample(dim, &mut e_rng).unwrap();
            for trial in 0..5 {
                let c = rng.normal_vec(dim);
                let (_, log_det) = e.forward(&c).unwrap();
                // Central-difference Jacobian.
                let h = 1e-5;
                let mut jac = vec![0.0; dim * dim];
                for j in 0..dim {
                    let mut cp = c.clone();
                    let mut cm = c.clone();
                    cp[j] += h;
                    cm[j] -= h;
                    let (xp, _) = e.forward(&cp).unwrap();
                    let (xm, _) = e.forward(&cm).unwrap();
                    for i in 0..dim {
                        jac[i * dim + j] = (xp[i] - xm[i]) / (2.0 * h);
                    }
                }
                let det = crate::linalg::det(&jac, dim);
                let err = (libm::log(det.abs()) - log_det).abs();
                assert!(
                    err < 1e-5,
                    "dim {dim} trial {trial}: log|det| {} vs {log_det}",
                    libm::log(det.abs())
                );
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let e1 = Entangler::sample(6, &mut RngStream::new(9).split("e", 0)).unwrap();
        let e2 = Entangler::sample(6, &mut RngStream::new(9).split("e", 0)).unwrap();
        let c = vec![0.5, -0.25, 1.0, 0.0, -1.5, 2.0];
        let (x1, d1) = e1.forward(&c).unwrap();
        let (x2, d2) = e2.forward(&c).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(d1, d2);
    }
}
