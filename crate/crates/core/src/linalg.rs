//! Small dense linear algebra helpers: random orthogonal matrices and
//! singular values of small matrices. Sizes here are at most a few dozen, so
//! simple textbook algorithms are plenty.

use crate::error::{CoreError, Result};
use crate::rng::RngStream;

/// Random k×k orthogonal matrix: QR of a Gaussian matrix via modified
/// Gram-Schmidt, row-major.
pub fn random_orthogonal(k: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let g = rng.normal_vec(k * k);
        if let Some(q) = gram_schmidt(&g, k) {
            return q;
        }
        // Rank-deficient draw (measure zero); redraw.
    }
}

/// Orthonormalize the columns of a k×k matrix; None if numerically singular.
fn gram_schmidt(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut q = a.to_vec();
    for j in 0..k {
        // Subtract projections onto previous columns, twice for stability.
        for _ in 0..2 {
            for p in 0..j {
                let mut dot = 0.0;
                for r in 0..k {
                    dot += q[r * k + j] * q[r * k + p];
                }
                for r in 0..k {
                    q[r * k + j] -= dot * q[r * k + p];
                }
            }
        }
        let norm = (0..k).map(|r| q[r * k + j] * q[r * k + j]).sum::<f64>();
        let norm = libm::sqrt(norm);
        if norm < 1e-10 {
            return None;
        }
        for r in 0..k {
            q[r * k + j] /= norm;
        }
    }
    Some(q)
}

/// Singular values of an m×n matrix (m ≥ n not required), descending.
/// Computed as the square roots of the eigenvalues of AᵀA via cyclic Jacobi;
/// zero singular values therefore resolve only to ~sqrt(machine eps)·‖A‖,
/// ample for the rank-ratio tolerances used by the identifiability checks.
/// Determinant via Gaussian elimination with partial pivoting. Accurate for
/// the small matrices (n ≤ ~8) used in Jacobian oracles.
pub fn det(a: &[f64], n: usize) -> f64 {
    assert_eq!(a.len(), n * n);
    let mut a = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        if p == 0.0 {
            return 0.0;
        }
        for i in (col + 1)..n {
            let f = a[i * n + col] / p;
            for j in col..n {
                a[i * n + j] -= f * a[col * n + j];
            }
        }
    }
    det
}

pub fn singular_values(a: &[f64], m: usize, n: usize) -> Result<Vec<f64>> {
    if a.len() != m * n || m == 0 || n == 0 {
        return Err(CoreError::invalid(format!(
            "singular_values: {m}x{n} with {} entries",
            a.len()
        )));
    }
    // ata[i][j] = Σ_r a[r,i]·a[r,j]
    let mut ata = vec![0.0; n * n];
    for r in 0..m {
        let row = &a[r * n..(r + 1) * n];
        for i in 0..n {
            for j in 0..n {
                ata[i * n + j] += row[i] * row[j];
            }
        }
    }
    let mut eig = symmetric_eigenvalues(&mut ata, n);
    for e in eig.iter_mut() {
        *e = libm::sqrt(e.max(0.0));
    }
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(eig)
}

/// Eigenvalues of a symmetric n×n matrix by cyclic Jacobi rotations.
/// The input buffer is destroyed.
fn symmetric_eigenvalues(s: &mut [f64], n: usize) -> Vec<f64> {
    let scale = s
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += s[i * n + j] * s[i * n + j];
            }
        }
        if off <= (1e-30 * scale).powi(2) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = s[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = s[p * n + p];
                let aqq = s[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let sn = t * c;
                for r in 0..n {
                    let srp = s[r * n + p];
                    let srq = s[r * n + q];
                    s[r * n + p] = c * srp - sn * srq;
                    s[r * n + q] = sn * srp + c * srq;
                }
                for r in 0..n {
                    let spr = s[p * n + r];
                    let sqr = s[q * n + r];
                    s[p * n + r] = c * spr - sn * sqr;
                    s[q * n + r] = sn * spr + c * sqr;
                }
            }
        }
    }
    (0..n).map(|i| s[i * n + i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::assert_close;

    #[test]
    fn orthogonal_matrices_satisfy_qtq_eq_i() {
        for k in [2usize, 3, 6, 12] {
            let mut rng = RngStream::new(k as u64).split("orth", 0);
            let q = random_orthogonal(k, &mut rng);
            for i in 0..k {
                for j in 0..k {
                    let mut dot = 0.0;
                    for r in 0..k {
                        dot += q[r * k + i] * q[r * k + j];
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_close(dot, want, 1e-10);
                }
            }
        }
    }

    #[test]
    fn singular_values_of_diagonal_matrix() {
        // diag(3, -2, 0.5) → singular values {3, 2, 0.5}
        let a = vec![3.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.5];
        let sv = singular_values(&a, 3, 3).unwrap();
        assert_close(sv[0], 3.0, 1e-9);
        assert_close(sv[1], 2.0, 1e-9);
        assert_close(sv[2], 0.5, 1e-9);
    }

    #[test]
    fn singular_values_detect_rank_deficiency() {
        // Two identical rows plus one independent: rank 2 for a 3x3.
        let a = vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 0.0, 1.0, 0.0];
        let sv = singular_values(&a, 3, 3).unwrap();
        assert!(sv[2] < 1e-6 * sv[0], "smallest singular value {}", sv[2]);
        assert!(sv[1] > 0.5);
    }

    #[test]
    fn singular_values_match_norm_for_rank_one() {
        // Outer product u·vᵀ has a single singular value |u||v|.
        let u = [1.0, -2.0, 0.5];
        let v = [0.3, 0.4];
        let mut a = vec![0.0; 6];
        for i in 0..3 {
            for j in 0..2 {
                a[i * 2 + j] = u[i] * v[j];
            }
        }
        let sv = singular_values(&a, 3, 2).unwrap();
        let norm_u = libm::sqrt(u.iter().map(|x| x * x).sum::<f64>());
        let norm_v = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        assert_close(sv[0], norm_u * norm_v, 1e-9);
        assert!(sv[1] < 1e-6 * sv[0]);
    }

    #[test]
    fn orthogonal_transform_preserves_singular_values() {
        let mut rng = RngStream::new(9).split("sv-orth", 0);
        let q = random_orthogonal(4, &mut rng);
        let a: Vec<f64> = rng.normal_vec(16);
        let sv_a = singular_values(&a, 4, 4).unwrap();
        // qa = q·a
        let mut qa = vec![0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    qa[i * 4 + j] += q[i * 4 + k] * a[k * 4 + j];
                }
            }
        }
        let sv_qa = singular_values(&qa, 4, 4).unwrap();
        for (x, y) in sv_a.iter().zip(&sv_qa) {
            assert_close(*x, *y, 1e-8);
        }
    }
}
