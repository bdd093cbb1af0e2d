//! Shared test oracles: finite-difference gradient checking and numeric
//! assertions. Used by unit, property, and acceptance tests; kept public so
//! integration tests can reach them, but not part of the stable API surface.

use crate::error::Result;
use crate::tensor::{backward, Tensor};

/// Relative error with an absolute floor of 1.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

#[track_caller]
pub fn assert_close(actual: f64, expected: f64, tol: f64) {
    assert!(
        (actual - expected).abs() <= tol,
        "expected {expected}, got {actual} (tol {tol})"
    );
}

/// Check the analytic gradient of `build` against central finite differences
/// for every element of every input.
///
/// `build` must be a deterministic function of `inputs` (clone any RNG stream
/// it uses). Inputs must be gradient-tracked leaves; points are perturbed by
/// ±h, so inputs must sit at least h inside any domain boundary.
pub fn gradcheck<F>(
    build: &F,
    inputs: &[Tensor],
    h: f64,
    tol: f64,
) -> std::result::Result<(), String>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let loss = build(inputs).map_err(|e| format!("build failed: {e}"))?;
    let grads = backward(&loss).map_err(|e| format!("backward failed: {e}"))?;

    for (slot, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(input)
            .ok_or_else(|| format!("input {slot} received no gradient"))?
            .to_vec();
        for e in 0..input.len() {
            let eval_at = |delta: f64| -> std::result::Result<f64, String> {
                let mut data = input.data().to_vec();
                data[e] += delta;
                let perturbed =
                    Tensor::param(data, input.shape().to_vec()).map_err(|e| e.to_string())?;
                let mut moved: Vec<Tensor> = inputs.to_vec();
                moved[slot] = perturbed;
                Ok(build(&moved).map_err(|e| e.to_string())?.item())
            };
            let numeric = (eval_at(h)? - eval_at(-h)?) / (2.0 * h);
            let err = rel_err(analytic[e], numeric);
            if err > tol {
                return Err(format!(
                    "input {slot} element {e}: analytic {} vs numeric {} (rel err {err:.3e})",
                    analytic[e], numeric
                ));
            }
        }
    }
    Ok(())
}
