//! Optimal alignment of causal variables to latent dimensions.
//!
//! `best_assignment` maximizes the summed R² of the matched pairs exactly
//! (shortest-augmenting-path assignment on the rectangular profit matrix) and
//! resolves ties toward the lexicographically smallest map, so alignments are
//! reproducible across runs and platforms.

use crate::error::{CoreError, Result};
use crate::eval::knn::R2Matrix;

/// Profit gaps below this count as ties; covers float noise from the
/// potential arithmetic (entries are ≤ 1 and row counts are small).
const TIE_TOL: f64 = 1e-12;

/// Exact maximum total profit of an injective matching of `rows` into `cols`
/// (requires rows.len() ≤ cols.len()). Jonker–Volgenant potentials on the
/// negated profits; O(rows²·cols).
fn max_profit(profit: &impl Fn(usize, usize) -> f64, rows: &[usize], cols: &[usize]) -> f64 {
    let n = rows.len();
    let m = cols.len();
    if n == 0 {
        return 0.0;
    }
    debug_assert!(n <= m, "assignment needs at least as many columns as rows");
    let cost = |i: usize, j: usize| -profit(rows[i - 1], cols[j - 1]);

    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; m + 1];
    let mut matched = vec![0_usize; m + 1]; // matched[j] = row occupying column j
    let mut way = vec![0_usize; m + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m)
        .filter(|&j| matched[j] != 0)
        .map(|j| profit(rows[matched[j] - 1], cols[j - 1]))
        .sum()
}

/// π mapping each causal variable to a distinct active latent column so that
/// Σ_i R²_{i,π(i)} is maximal; among (near-)ties the lexicographically
/// smallest π wins. Errors when fewer active latents exist than causal
/// variables.
pub fn best_assignment(r2: &R2Matrix) -> Result<Vec<usize>> {
    let k = r2.k();
    let mut remaining: Vec<usize> = (0..r2.m()).filter(|&j| r2.active()[j]).collect();
    if remaining.len() < k {
        return Err(CoreError::invalid(format!(
            "only {} informative latents for {} causal variables",
            remaining.len(),
            k
        )));
    }
    let profit = |i: usize, j: usize| r2.get(i, j);

    // Fix π(i) in causal order: the smallest candidate column whose best
    // completion over the remaining rows still attains the optimum.
    let mut pi = Vec::with_capacity(k);
    for i in 0..k {
        let rest_rows: Vec<usize> = (i + 1..k).collect();
        let totals: Vec<f64> = (0..remaining.len())
            .map(|ci| {
                let mut others = remaining.clone();
                let j = others.remove(ci);
                profit(i, j) + max_profit(&profit, &rest_rows, &others)
            })
            .collect();
        let best = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ci = totals
            .iter()
            .position(|&t| t >= best - TIE_TOL)
            .expect("at least one candidate attains the maximum");
        pi.push(remaining.remove(ci));
    }
    Ok(pi)
}

/// Mean aligned R²: (1/K) Σ_i R²_{i,π(i)}.
pub fn r2_diag(r2: &R2Matrix, pi: &[usize]) -> f64 {
    let s: f64 = pi.iter().enumerate().map(|(i, &j)| r2.get(i, j)).sum();
    s / r2.k() as f64
}

/// Mean best off-alignment R²: (1/K) Σ_i max_{j≠π(i)} R²_{ij}. Low values
/// mean each causal variable is captured by a single latent.
pub fn r2_sep(r2: &R2Matrix, pi: &[usize]) -> f64 {
    let s: f64 = pi
        .iter()
        .enumerate()
        .map(|(i, &aligned)| {
            (0..r2.m())
                .filter(|&j| j != aligned)
                .map(|j| r2.get(i, j))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    s / r2.k() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::testing::assert_close;

    fn matrix(k: usize, m: usize, entries: Vec<f64>) -> R2Matrix {
        R2Matrix::from_entries(k, m, entries).unwrap()
    }

    /// Lexicographic enumeration of all injections; strict improvements
    /// replace, ties keep the earlier (smaller) map.
    fn brute_force(r2: &R2Matrix) -> (f64, Vec<usize>) {
        fn rec(
            r2: &R2Matrix,
            i: usize,
            used: &mut Vec<bool>,
            path: &mut Vec<usize>,
            sum: f64,
            best: &mut (f64, Vec<usize>),
        ) {
            if i == r2.k() {
                if sum > best.0 + TIE_TOL {
                    *best = (sum, path.clone());
                }
                return;
            }
            for j in 0..r2.m() {
                if !used[j] {
                    used[j] = true;
                    path.push(j);
                    rec(r2, i + 1, used, path, sum + r2.get(i, j), best);
                    path.pop();
                    used[j] = false;
                }
            }
        }
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut used = vec![false; r2.m()];
        rec(r2, 0, &mut used, &mut Vec::new(), 0.0, &mut best);
        best
    }

    fn profit_of(r2: &R2Matrix, pi: &[usize]) -> f64 {
        pi.iter().enumerate().map(|(i, &j)| r2.get(i, j)).sum()
    }

    #[test]
    fn prefers_the_higher_total_over_the_greedy_diagonal() {
        let r2 = matrix(2, 2, vec![0.5, 0.1, 0.2, 0.7]);
        assert_eq!(best_assignment(&r2).unwrap(), vec![0, 1]); // 1.2 beats 0.3
        let crossed = matrix(2, 2, vec![0.1, 0.9, 0.8, 0.2]);
        assert_eq!(best_assignment(&crossed).unwrap(), vec![1, 0]);
    }

    #[test]
    fn diagonally_dominant_matrices_align_to_identity() {
        let mut rng = RngStream::new(21);
        for _ in 0..20 {
            let k = 2 + rng.below(4) as usize;
            let m = k + rng.below(4) as usize;
            let mut entries = vec![0.0; k * m];
            for (idx, e) in entries.iter_mut().enumerate() {
                let (i, j) = (idx / m, idx % m);
                *e = if i == j {
                    0.8 + 0.2 * rng.uniform()
                } else {
                    0.5 * rng.uniform()
                };
            }
            let r2 = matrix(k, m, entries);
            let pi = best_assignment(&r2).unwrap();
            assert_eq!(pi, (0..k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn exact_ties_break_to_the_lexicographically_smallest_map() {
        // Every injection of 2 rows into 3 columns has profit 1.0.
        let flat = matrix(2, 3, vec![0.5; 6]);
        assert_eq!(best_assignment(&flat).unwrap(), vec![0, 1]);

        // Columns 0 and 2 are interchangeable for both rows; the smaller
        // index must win the first slot.
        let twin = matrix(2, 3, vec![0.9, 0.1, 0.9, 0.3, 0.8, 0.3]);
        assert_eq!(best_assignment(&twin).unwrap(), vec![0, 1]);
    }

    #[test]
    fn matches_brute_force_on_random_rectangles() {
        let mut rng = RngStream::new(22);
        for trial in 0..1000 {
            let k = 2 + rng.below(5) as usize; // 2..=6
            let m = k + rng.below((13 - k as u64).min(7)) as usize;
            let entries: Vec<f64> = (0..k * m).map(|_| rng.uniform()).collect();
            let r2 = matrix(k, m, entries);
            let pi = best_assignment(&r2).unwrap();

            let mut seen = vec![false; m];
            for &j in &pi {
                assert!(!seen[j], "trial {trial}: π reuses column {j}");
                seen[j] = true;
            }
            let (bf_profit, bf_pi) = brute_force(&r2);
            let got = profit_of(&r2, &pi);
            assert!(
                (got - bf_profit).abs() <= 1e-10,
                "trial {trial}: profit {got} vs brute-force {bf_profit} (π {pi:?} vs {bf_pi:?})"
            );
        }
    }

    #[test]
    fn dead_columns_are_never_assigned() {
        // The constant middle latent is flagged dead by r2_matrix, so the
        // alignment must step over it even though live columns sit on both
        // sides.
        let mut rng = RngStream::new(23);
        let rows = 400;
        let mut c = Vec::with_capacity(rows * 2);
        let mut z = Vec::with_capacity(rows * 3);
        for _ in 0..rows {
            let a = rng.standard_normal();
            let b = rng.standard_normal();
            c.extend([a, b]);
            z.extend([a, 7.0, b]);
        }
        let r2 = crate::eval::knn::r2_matrix(&z, 3, &c, 2).unwrap();
        assert_eq!(r2.active(), &[true, false, true]);
        assert_eq!(best_assignment(&r2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn too_few_active_latents_is_an_error() {
        let mut rng = RngStream::new(24);
        let rows = 400;
        let mut c = Vec::with_capacity(rows * 2);
        let mut z = Vec::with_capacity(rows * 2);
        for _ in 0..rows {
            let a = rng.standard_normal();
            c.extend([a, rng.standard_normal()]);
            z.extend([a, -3.0]); // one live latent, one dead
        }
        let r2 = crate::eval::knn::r2_matrix(&z, 2, &c, 2).unwrap();
        let err = best_assignment(&r2).unwrap_err();
        assert!(err.to_string().contains("informative"));
    }

    #[test]
    fn diag_and_sep_follow_their_definitions() {
        let ident = matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        assert_close(r2_diag(&ident, &[0, 1]), 1.0, 1e-15);
        assert_close(r2_sep(&ident, &[0, 1]), 0.0, 1e-15);

        let mixed = matrix(2, 2, vec![0.9, 0.8, 0.1, 0.95]);
        assert_close(r2_diag(&mixed, &[0, 1]), 0.925, 1e-15);
        assert_close(r2_sep(&mixed, &[0, 1]), 0.45, 1e-15);
    }

    #[test]
    fn sep_scans_all_columns_including_inactive_ones() {
        let wide = matrix(1, 3, vec![0.2, 0.9, 0.4]);
        assert_close(r2_sep(&wide, &[1]), 0.4, 1e-15);
        assert_close(r2_diag(&wide, &[1]), 0.9, 1e-15);
    }
}
