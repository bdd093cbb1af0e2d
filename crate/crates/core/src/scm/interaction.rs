//! Binary interaction rules: how the regime variable R selects which causal
//! variables get interacted with at each step.
//!
//! Both rules read a robotic-arm metaphor: R is a disc of small radius moving
//! over [−1.5, 1.5]²; positions with any |R_d| > 1 are observational. Inside
//! [−1, 1]² the disc touches regions, and touched regions map to interaction
//! targets. The `robotic-arm` rule uses a Voronoi partition with one cell per
//! variable; the `minimal-code` rule uses ⌊log₂K⌋+2 vertical strips whose
//! binary code patterns hit every variable distinctly.

use crate::error::{CoreError, Result};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

/// Default disc radius.
pub const TOUCH_RADIUS: f64 = 1.0 / 16.0;

/// Number of disc test points for Voronoi intersection (boundary points plus
/// the center).
const DISC_TEST_POINTS: usize = 64;

/// Minimum cell area as a fraction of the square, per variable count K:
/// 1/(4K). Sampled seed configurations below this are rejected.
fn min_area_fraction(k: usize) -> f64 {
    1.0 / (4.0 * k as f64)
}

/// Grid resolution for the rejection-sampling area estimate.
const AREA_GRID: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    RoboticArm,
    MinimalCode,
}

impl std::fmt::Display for RuleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RuleKind::RoboticArm => write!(f, "robotic-arm"),
            RuleKind::MinimalCode => write!(f, "minimal-code"),
        }
    }
}

/// Smallest number of interaction regions that still separates K variables:
/// ⌊log₂K⌋ + 2.
pub fn min_regimes(k: usize) -> usize {
    debug_assert!(k >= 1);
    (63 - (k as u64).leading_zeros() as usize) + 2
}

/// Binary-code pattern bit for variable i (0-based position) and cluster c
/// (1-based): 1 iff ⌊(i+1)/2^(c−1)⌋ mod 2 == 0.
///
/// With 0-based variable positions the codes n = i+1 range over [1, K], and
/// since 2^L > 2K for L = min_regimes(K), no two codes can sum to 2^L − 1:
/// the K patterns are pairwise distinct, pairwise non-complementary, and
/// non-constant for every K. (A 1-based enumeration would break this at
/// K = 2^m − 1, where codes K and K+1 are bitwise complements.)
pub fn minimal_pattern(i: usize, c: usize) -> u8 {
    debug_assert!(c >= 1);
    (((i as u64 + 1) >> (c - 1)) % 2 == 0) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum InteractionRule {
    RoboticArm {
        /// Voronoi seed points in [−1,1]², one cell per variable.
        seeds: Vec<[f64; 2]>,
        /// variable_cell[v] = index of the cell assigned to variable v.
        /// Normally a bijection; non-bijective assignments are representable
        /// so that degenerate configurations can be analyzed.
        variable_cell: Vec<usize>,
        touch_radius: f64,
    },
    MinimalCode {
        k: usize,
        /// Cluster count L = min_regimes(K): equal-width vertical strips.
        clusters: usize,
        touch_radius: f64,
    },
}

impl InteractionRule {
    pub fn kind(&self) -> RuleKind {
        match self {
            InteractionRule::RoboticArm { .. } => RuleKind::RoboticArm,
            InteractionRule::MinimalCode { .. } => RuleKind::MinimalCode,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            InteractionRule::RoboticArm { variable_cell, .. } => variable_cell.len(),
            InteractionRule::MinimalCode { k, .. } => *k,
        }
    }

    /// Sample a robotic-arm rule: K uniform seeds, rejected until every cell
    /// holds at least 1/(4K) of the square, plus a random cell↔variable
    /// bijection. `assignment_override` substitutes an explicit (possibly
    /// degenerate) variable→cell map.
    pub fn sample_robotic_arm(
        k: usize,
        touch_radius: f64,
        assignment_override: Option<Vec<usize>>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if k < 2 {
            return Err(CoreError::invalid("robotic-arm rule needs K ≥ 2"));
        }
        let seeds = sample_fair_seeds(k, rng)?;
        let variable_cell = match assignment_override {
            Some(a) => {
                if a.len() != k || a.iter().any(|&c| c >= k) {
                    return Err(CoreError::invalid(
                        "cell assignment must map each of K variables to a cell index < K",
                    ));
                }
                a
            }
            None => {
                let mut perm: Vec<usize> = (0..k).collect();
                rng.shuffle(&mut perm);
                perm
            }
        };
        Ok(InteractionRule::RoboticArm {
            seeds,
            variable_cell,
            touch_radius,
        })
    }

    pub fn minimal_code(k: usize, touch_radius: f64) -> Result<Self> {
        if k < 1 {
            return Err(CoreError::invalid("minimal-code rule needs K ≥ 1"));
        }
        Ok(InteractionRule::MinimalCode {
            k,
            clusters: min_regimes(k),
            touch_radius,
        })
    }
}

fn sample_fair_seeds(k: usize, rng: &mut RngStream) -> Result<Vec<[f64; 2]>> {
    const MAX_ATTEMPTS: usize = 10_000;
    'attempt: for _ in 0..MAX_ATTEMPTS {
        let seeds: Vec<[f64; 2]> = (0..k)
            .map(|_| [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)])
            .collect();
        // Estimate cell areas by nearest-seed assignment on a grid.
        let mut counts = vec![0usize; k];
        for gy in 0..AREA_GRID {
            for gx in 0..AREA_GRID {
                let p = [
                    -1.0 + 2.0 * (gx as f64 + 0.5) / AREA_GRID as f64,
                    -1.0 + 2.0 * (gy as f64 + 0.5) / AREA_GRID as f64,
                ];
                counts[nearest_seed(&seeds, p)] += 1;
            }
        }
        let min_count = (min_area_fraction(k) * (AREA_GRID * AREA_GRID) as f64) as usize;
        for &c in &counts {
            if c < min_count {
                continue 'attempt;
            }
        }
        return Ok(seeds);
    }
    Err(CoreError::invalid(format!(
        "could not sample fair Voronoi seeds for K={k} in {MAX_ATTEMPTS} attempts"
    )))
}

fn nearest_seed(seeds: &[[f64; 2]], p: [f64; 2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in seeds.iter().enumerate() {
        let d = (p[0] - s[0]) * (p[0] - s[0]) + (p[1] - s[1]) * (p[1] - s[1]);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Uniform regime draw over [−1.5, 1.5]².
pub fn sample_regime(rng: &mut RngStream) -> [f64; 2] {
    [rng.uniform_in(-1.5, 1.5), rng.uniform_in(-1.5, 1.5)]
}

/// Evaluate the rule: which variables does the disc at R interact with.
/// `c_prev` is accepted for interface generality; both built-in rules are
/// state-independent.
pub fn interactions_from_regime(
    r: [f64; 2],
    _c_prev: Option<&[f64]>,
    rule: &InteractionRule,
) -> Vec<u8> {
    let k = rule.k();
    if r[0].abs() > 1.0 || r[1].abs() > 1.0 {
        return vec![0; k];
    }
    match rule {
        InteractionRule::RoboticArm {
            seeds,
            variable_cell,
            touch_radius,
        } => {
            let mut cell_hit = vec![false; seeds.len()];
            cell_hit[nearest_seed(seeds, r)] = true;
            for j in 0..DISC_TEST_POINTS {
                let ang = 2.0 * std::f64::consts::PI * j as f64 / DISC_TEST_POINTS as f64;
                let p = [
                    r[0] + touch_radius * libm::cos(ang),
                    r[1] + touch_radius * libm::sin(ang),
                ];
                cell_hit[nearest_seed(seeds, p)] = true;
            }
            variable_cell
                .iter()
                .map(|&cell| cell_hit[cell] as u8)
                .collect()
        }
        InteractionRule::MinimalCode {
            k,
            clusters,
            touch_radius,
        } => {
            let mut out = vec![0u8; *k];
            let width = 2.0 / *clusters as f64;
            for c in 0..*clusters {
                let lo = -1.0 + c as f64 * width;
                let hi = lo + width;
                // Strips span the full y range, so touching is an x-interval
                // overlap test.
                if r[0] + touch_radius >= lo && r[0] - touch_radius <= hi {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o |= minimal_pattern(i, c + 1);
                    }
                }
            }
            out
        }
    }
}
