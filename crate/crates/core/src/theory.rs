//! Executable identifiability checks for binary-interaction SCMs.
//!
//! Identification of the causal variables from observations hinges on two
//! kinds of variability, probed here numerically on ground-truth worlds:
//! the interaction patterns across regimes must not collapse onto each other
//! (no variable's pattern a binary function of another's), and the
//! log-density difference Δ between each variable's interacted and
//! observational transition distributions must vary — either in the new
//! value itself (curvature) or across previous states (independent
//! derivative directions). The two-variable rotation oracle demonstrates the
//! boundary of the theory in closed form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg;
use crate::scm::{interactions_from_regime, InteractionRule, ScmWorld};

/// Central-difference step for numeric Δ derivatives.
pub const DERIV_STEP: f64 = 1e-4;

/// A numeric second derivative above this magnitude counts as curvature.
pub const CURVATURE_TOL: f64 = 1e-4;

/// Columns count as linearly independent when the smallest singular value
/// exceeds this fraction of the largest.
pub const RANK_TOL: f64 = 1e-6;

/// Regime means closer than this count as one mean.
pub const MEAN_TOL: f64 = 1e-9;

// --------------------------------------------------------------------------
// Interaction pattern tables

/// Q×K binary matrix: row q is the interaction vector one designed regime
/// produces, column i is variable i's pattern across regimes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternTable {
    rows: Vec<Vec<u8>>,
}

impl PatternTable {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<PatternTable> {
        if rows.len() < 2 {
            return Err(CoreError::invalid(
                "a pattern table needs at least two regimes",
            ));
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(CoreError::invalid("a pattern table needs at least one variable"));
        }
        for (q, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(CoreError::invalid(format!(
                    "pattern row {q} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|&b| b > 1) {
                return Err(CoreError::invalid(format!(
                    "pattern row {q} has non-binary entries"
                )));
            }
        }
        Ok(PatternTable { rows })
    }

    /// Table of the rule's designed regimes: one per interaction region, each
    /// row being what the simulator actually produces there, disc radius
    /// included.
    pub fn from_rule(rule: &InteractionRule) -> Result<PatternTable> {
        let rows = designed_regimes(rule)
            .into_iter()
            .map(|r| interactions_from_regime(r, None, rule))
            .collect();
        PatternTable::new(rows)
    }

    pub fn regimes(&self) -> usize {
        self.rows.len()
    }

    pub fn variables(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, q: usize) -> &[u8] {
        &self.rows[q]
    }
}

/// One probe regime per interaction region. Strips are probed at their
/// centers; Voronoi cells at their deepest interior point, where the disc is
/// least likely to cross into a neighbor. Cells may be too small or thin to
/// hold the disc at all — then the probe row honestly reports every variable
/// the disc reaches.
fn designed_regimes(rule: &InteractionRule) -> Vec<[f64; 2]> {
    match rule {
        InteractionRule::RoboticArm { seeds, .. } => deepest_cell_points(seeds),
        InteractionRule::MinimalCode { clusters, .. } => {
            let width = 2.0 / *clusters as f64;
            (0..*clusters)
                .map(|c| [-1.0 + width * (c as f64 + 0.5), 0.0])
                .collect()
        }
    }
}

/// Grid resolution for the deepest-point search; clearance found this way is
/// within ~2/DEEP_GRID of the cell's true maximum.
const DEEP_GRID: usize = 129;

/// For each cell, the grid point of [−1,1]² maximizing the distance to the
/// cell boundary (the nearest bisector against any other seed). The seed
/// itself is the fallback for cells so small the grid misses them.
fn deepest_cell_points(seeds: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut best: Vec<([f64; 2], f64)> = seeds
        .iter()
        .map(|&s| (s, boundary_clearance(seeds, s)))
        .collect();
    for gy in 0..DEEP_GRID {
        for gx in 0..DEEP_GRID {
            let p = [
                -1.0 + 2.0 * gx as f64 / (DEEP_GRID - 1) as f64,
                -1.0 + 2.0 * gy as f64 / (DEEP_GRID - 1) as f64,
            ];
            let (cell, clearance) = (nearest_cell(seeds, p), boundary_clearance(seeds, p));
            if clearance > best[cell].1 {
                best[cell] = (p, clearance);
            }
        }
    }
    best.into_iter().map(|(p, _)| p).collect()
}

fn nearest_cell(seeds: &[[f64; 2]], p: [f64; 2]) -> usize {
    let mut cell = 0;
    let mut nearest = f64::INFINITY;
    for (i, s) in seeds.iter().enumerate() {
        let d = (p[0] - s[0]) * (p[0] - s[0]) + (p[1] - s[1]) * (p[1] - s[1]);
        if d < nearest {
            nearest = d;
            cell = i;
        }
    }
    cell
}

/// Distance from p to the boundary of its own Voronoi cell: the minimum over
/// other seeds o of the signed distance to the bisector of (q, o), which for
/// p in cell q is (|p−s_o|² − |p−s_q|²) / (2|s_q−s_o|).
fn boundary_clearance(seeds: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let q = nearest_cell(seeds, p);
    let dq = (p[0] - seeds[q][0]) * (p[0] - seeds[q][0])
        + (p[1] - seeds[q][1]) * (p[1] - seeds[q][1]);
    let mut clearance = f64::INFINITY;
    for (o, s) in seeds.iter().enumerate() {
        if o == q {
            continue;
        }
        let d_o = (p[0] - s[0]) * (p[0] - s[0]) + (p[1] - s[1]) * (p[1] - s[1]);
        let seed_gap = libm::sqrt(
            (seeds[q][0] - s[0]) * (seeds[q][0] - s[0])
                + (seeds[q][1] - s[1]) * (seeds[q][1] - s[1]),
        );
        clearance = clearance.min((d_o - dq) / (2.0 * seed_gap));
    }
    clearance
}

/// Why a pattern table fails the distinctness requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PatternViolation {
    /// The variable's column never changes, making it a constant function of
    /// every other column.
    Constant { variable: usize },
    /// Two variables share one pattern.
    Identical { a: usize, b: usize },
    /// One variable's pattern is the bitwise negation of the other's.
    Complementary { a: usize, b: usize },
}

impl fmt::Display for PatternViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternViolation::Constant { variable } => {
                write!(f, "variable {variable} has a constant interaction pattern")
            }
            PatternViolation::Identical { a, b } => {
                write!(f, "variables {a} and {b} have identical interaction patterns")
            }
            PatternViolation::Complementary { a, b } => write!(
                f,
                "variables {a} and {b} have complementary interaction patterns"
            ),
        }
    }
}

/// A table separates its variables only if no column is a deterministic
/// binary function of another; constants, duplicates, and complements are the
/// three ways that can happen. Returns the first violation in scan order
/// (constants, then pairs ascending), or None when the table is clean.
pub fn distinct_pattern_check(table: &PatternTable) -> Option<PatternViolation> {
    let q = table.regimes();
    let k = table.variables();
    let col = |v: usize, r: usize| table.rows[r][v];
    for v in 0..k {
        if (1..q).all(|r| col(v, r) == col(v, 0)) {
            return Some(PatternViolation::Constant { variable: v });
        }
    }
    for a in 0..k {
        for b in (a + 1)..k {
            if (0..q).all(|r| col(a, r) == col(b, r)) {
                return Some(PatternViolation::Identical { a, b });
            }
            if (0..q).all(|r| col(a, r) == 1 - col(b, r)) {
                return Some(PatternViolation::Complementary { a, b });
            }
        }
    }
    None
}

// --------------------------------------------------------------------------
// Log-density differences

/// Log-density difference between a variable's interacted and observational
/// transition distributions, evaluable anywhere on their shared support:
/// `eval(i, c, prev)` = log p(C_i = c | prev, I_i = 1) − log p(C_i = c | prev, I_i = 0).
pub struct DeltaFn {
    k: usize,
    f: Box<dyn Fn(usize, f64, &[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for DeltaFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeltaFn").field("k", &self.k).finish()
    }
}

impl DeltaFn {
    pub fn new(
        k: usize,
        f: impl Fn(usize, f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> DeltaFn {
        DeltaFn { k, f: Box::new(f) }
    }

    /// Ground-truth Δ of a simulator world: an interaction replaces the
    /// mechanism mean with 0 and keeps the noise scale, so
    /// Δ_i(c | prev) = [(c − μ_i(prev))² − c²] / (2σ²).
    pub fn from_world(world: &ScmWorld) -> Result<DeltaFn> {
        let sigma = world.mechanism().noise_std();
        if sigma <= 0.0 {
            return Err(CoreError::invalid(
                "ground-truth delta needs a positive noise std",
            ));
        }
        let mech = world.mechanism().clone();
        let graph = world.graph().clone();
        Ok(DeltaFn::new(world.config().k, move |i, c, prev| {
            delta_additive_gaussian(mech.mean(i, prev, &graph), 0.0, sigma, c)
        }))
    }

    pub fn variables(&self) -> usize {
        self.k
    }

    pub fn eval(&self, i: usize, c: f64, prev: &[f64]) -> f64 {
        debug_assert!(i < self.k);
        (self.f)(i, c, prev)
    }
}

/// Δ for two equal-variance Gaussians, `mu0` the observational mean and `mu1`
/// the interacted one: log N(c; μ1, σ) − log N(c; μ0, σ) reduces to
/// [(c − μ0)² − (c − μ1)²] / (2σ²).
pub fn delta_additive_gaussian(mu0: f64, mu1: f64, sigma: f64, c: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    ((c - mu0) * (c - mu0) - (c - mu1) * (c - mu1)) / (2.0 * sigma * sigma)
}

// --------------------------------------------------------------------------
// Variability probes

/// Curvature probe: true iff for EVERY variable the numeric second derivative
/// of Δ in C exceeds CURVATURE_TOL at some sample. Constant-variance additive
/// Gaussians make Δ affine in C and fail for all variables. `samples` are
/// (C value, previous state) pairs shared across variables.
///
/// Errors when Δ is non-finite at a probed point (the two distributions must
/// share support) and when some variable's Δ is zero on every sample (they
/// must be different distributions).
pub fn dynamics_variability_check(
    delta: &DeltaFn,
    samples: &[(f64, Vec<f64>)],
) -> Result<bool> {
    if samples.is_empty() {
        return Err(CoreError::invalid(
            "dynamics variability needs at least one sample point",
        ));
    }
    let h = DERIV_STEP;
    let mut all_curved = true;
    for i in 0..delta.variables() {
        let mut magnitude = 0.0f64;
        let mut curved = false;
        for (c, prev) in samples {
            let lo = delta.eval(i, c - h, prev);
            let mid = delta.eval(i, *c, prev);
            let hi = delta.eval(i, c + h, prev);
            if !(lo.is_finite() && mid.is_finite() && hi.is_finite()) {
                return Err(CoreError::NonFinite {
                    context: format!(
                        "delta of variable {i} near C = {c}: interacted and \
                         observational distributions must share their support"
                    ),
                });
            }
            magnitude = magnitude.max(lo.abs()).max(mid.abs()).max(hi.abs());
            if ((hi - 2.0 * mid + lo) / (h * h)).abs() > CURVATURE_TOL {
                curved = true;
            }
        }
        if magnitude == 0.0 {
            return Err(CoreError::invalid(format!(
                "variable {i}: interacted and observational distributions \
                 coincide on every sample; the check needs strictly different \
                 distributions"
            )));
        }
        all_curved &= curved;
    }
    Ok(all_curved)
}

/// Verdict of a column-independence test plus the singular values behind it,
/// largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeVariability {
    pub independent: bool,
    pub singular_values: Vec<f64>,
}

/// Rank probe of a row-major `rows`×`cols` matrix: the columns count as
/// linearly independent when the smallest singular value clears RANK_TOL of
/// the largest.
pub fn column_independence(v: &[f64], rows: usize, cols: usize) -> Result<TimeVariability> {
    let sv = linalg::singular_values(v, rows, cols)?;
    let largest = sv[0];
    let smallest = *sv.last().expect("cols ≥ 1");
    Ok(TimeVariability {
        independent: smallest > RANK_TOL * largest,
        singular_values: sv,
    })
}

/// State-variability probe: builds V[j][i] = ∂Δ(C_i | prev = c_j)/∂C_i at
/// C_i = `at` (central difference) and tests the K columns for linear
/// independence across at least K+1 distinct previous states.
pub fn time_variability_check(
    delta: &DeltaFn,
    prev_states: &[Vec<f64>],
    at: f64,
) -> Result<TimeVariability> {
    let k = delta.variables();
    if prev_states.len() < k + 1 {
        return Err(CoreError::invalid(format!(
            "time variability needs at least {} previous states, got {}",
            k + 1,
            prev_states.len()
        )));
    }
    for (j, s) in prev_states.iter().enumerate() {
        if s.len() != k {
            return Err(CoreError::invalid(format!(
                "previous state {j} has {} coordinates, expected {k}",
                s.len()
            )));
        }
    }
    for a in 0..prev_states.len() {
        for b in (a + 1)..prev_states.len() {
            if prev_states[a] == prev_states[b] {
                return Err(CoreError::invalid(format!(
                    "previous states {a} and {b} are identical; the check \
                     needs distinct states"
                )));
            }
        }
    }
    let h = DERIV_STEP;
    let mut v = vec![0.0; prev_states.len() * k];
    for (j, prev) in prev_states.iter().enumerate() {
        for i in 0..k {
            let hi = delta.eval(i, at + h, prev);
            let lo = delta.eval(i, at - h, prev);
            if !(hi.is_finite() && lo.is_finite()) {
                return Err(CoreError::NonFinite {
                    context: format!("delta derivative of variable {i} at state {j}"),
                });
            }
            v[j * k + i] = (hi - lo) / (2.0 * h);
        }
    }
    column_independence(&v, prev_states.len(), k)
}

// --------------------------------------------------------------------------
// Two-variable rotation oracle

/// Mean of each variable before rotation, indexed by its interaction bit.
const ROTATION_COMPONENT_MEANS: [f64; 2] = [-0.5, 0.5];

/// Closed-form regime means of the rotated two-variable Gaussian pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationOracle {
    /// Rotated mean vectors, regimes ordered (I₁, I₂) = (0,0), (0,1), (1,0), (1,1).
    pub means: [[f64; 2]; 4],
    /// Distinct mean values per axis at MEAN_TOL.
    pub axis_mean_counts: [usize; 2],
    /// Whether one binary variable per axis explains every regime mean:
    /// exactly two distinct means on both axes.
    pub binary_describable: bool,
}

/// Two independent unit-variance Gaussians whose interactions shift their
/// means from −½ to +½, observed through a rotation by `theta`. Description
/// by binary interaction variables survives exactly the right-angle
/// rotations; any other angle smears some axis over three or four means.
pub fn gaussian_rotation_oracle(theta: f64) -> RotationOracle {
    let s = libm::sin(theta);
    let c = libm::cos(theta);
    let mut means = [[0.0; 2]; 4];
    for (q, m) in means.iter_mut().enumerate() {
        let m1 = ROTATION_COMPONENT_MEANS[(q >> 1) & 1];
        let m2 = ROTATION_COMPONENT_MEANS[q & 1];
        *m = [c * m1 - s * m2, s * m1 + c * m2];
    }
    let counts = [
        distinct_count([means[0][0], means[1][0], means[2][0], means[3][0]]),
        distinct_count([means[0][1], means[1][1], means[2][1], means[3][1]]),
    ];
    RotationOracle {
        means,
        axis_mean_counts: counts,
        binary_describable: counts == [2, 2],
    }
}

fn distinct_count(mut vals: [f64; 4]) -> usize {
    vals.sort_by(f64::total_cmp);
    1 + vals.windows(2).filter(|w| w[1] - w[0] > MEAN_TOL).count()
}

// --------------------------------------------------------------------------
// Combined suite

/// Verdicts of every check over one simulator world; what `check-theory`
/// serializes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    /// Regime count of the designed pattern table.
    pub pattern_regimes: usize,
    pub pattern_distinct: bool,
    pub pattern_violation: Option<PatternViolation>,
    pub dynamics_variability: bool,
    pub time_variability: bool,
    /// Singular values behind the time-variability verdict, largest first.
    pub singular_values: Vec<f64>,
}

/// (C, state) samples the dynamics probe draws from the rollout.
const SUITE_SAMPLES: usize = 64;

/// Rollout frames discarded before sampling states.
const SUITE_BURN_IN: usize = 16;

/// Run all checks against a world's ground truth. Probe points come from the
/// world's own rollout (after burn-in), so the report is a pure function of
/// the world.
pub fn run_theory_suite(world: &ScmWorld) -> Result<TheoryReport> {
    let table = PatternTable::from_rule(world.rule())?;
    let violation = distinct_pattern_check(&table);

    let delta = DeltaFn::from_world(world)?;
    let k = world.config().k;
    let frames = SUITE_BURN_IN + SUITE_SAMPLES + k + 2;
    let roll = world.generate_rollout(frames)?;
    let state = |t: usize| -> Vec<f64> {
        roll.c[t * k..(t + 1) * k].iter().map(|&v| f64::from(v)).collect()
    };

    // Observed transitions: the C probe value is a coordinate of the next
    // frame, the conditioning state is the current one.
    let samples: Vec<(f64, Vec<f64>)> = (SUITE_BURN_IN..SUITE_BURN_IN + SUITE_SAMPLES)
        .map(|t| (f64::from(roll.c[(t + 1) * k + t % k]), state(t)))
        .collect();
    let dynamics = dynamics_variability_check(&delta, &samples)?;

    let states: Vec<Vec<f64>> = (frames - (k + 1)..frames).map(state).collect();
    let tv = time_variability_check(&delta, &states, 0.0)?;

    Ok(TheoryReport {
        pattern_regimes: table.regimes(),
        pattern_distinct: violation.is_none(),
        pattern_violation: violation,
        dynamics_variability: dynamics,
        time_variability: tv.independent,
        singular_values: tv.singular_values,
    })
}
