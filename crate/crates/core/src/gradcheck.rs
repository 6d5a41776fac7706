//! Finite-difference check of analytic gradients.

use crate::tensor::Result;

/// Compares the analytic gradient returned by `f` against fourth-order
/// central differences of its value, one coordinate at a time. The wider
/// stencil allows a step large enough that rounding in the function value
/// does not swamp very small gradient entries.
///
/// `f` maps a flat parameter vector to `(value, analytic_gradient)`. Returns
/// the largest `|analytic − numeric| / max(1e-12, |analytic| + |numeric|)`.
pub fn grad_check<F>(f: F, params: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    assert!(eps > 0.0, "grad_check step must be positive");
    let (_, analytic) = f(params)?;
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = probe[i];
        let mut at = |h: f64| -> Result<f64> {
            probe[i] = orig + h;
            Ok(f(&probe)?.0)
        };
        let (p1, m1, p2, m2) = (at(eps)?, at(-eps)?, at(2.0 * eps)?, at(-2.0 * eps)?);
        probe[i] = orig;
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}
