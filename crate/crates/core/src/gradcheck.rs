//! Numerical gradient checking against central finite differences.
//!
//! These helpers operate on plain closures so the oracle stays independent
//! of the analytic gradient implementations they validate.

/// Central finite-difference partial derivative of `f` at `theta` in
/// coordinate `j` with half-width `h`.
pub fn central_partial<F: Fn(&[f64]) -> f64>(f: &F, theta: &[f64], j: usize, h: f64) -> f64 {
    let mut plus = theta.to_vec();
    let mut minus = theta.to_vec();
    plus[j] += h;
    minus[j] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Central finite-difference directional derivative of `f` at `theta`
/// along `v`.
pub fn directional_derivative<F: Fn(&[f64]) -> f64>(
    f: &F,
    theta: &[f64],
    v: &[f64],
    h: f64,
) -> f64 {
    let plus: Vec<f64> = theta.iter().zip(v).map(|(t, vi)| t + h * vi).collect();
    let minus: Vec<f64> = theta.iter().zip(v).map(|(t, vi)| t - h * vi).collect();
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Relative error with an absolute floor for near-zero references.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-8)
}

/// Largest relative error between `grad` and the central finite
/// differences of `f` over the coordinates in `coords`.
pub fn max_rel_err_on_coords<F: Fn(&[f64]) -> f64>(
    f: &F,
    theta: &[f64],
    grad: &[f64],
    coords: &[usize],
    h: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for &j in coords {
        let fd = central_partial(f, theta, j, h);
        worst = worst.max(rel_err(grad[j], fd));
    }
    worst
}
