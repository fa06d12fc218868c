//! Per-step measurements and the pathwise quantities consumed by the
//! bound verifiers.

use crate::error::{Error, Result};
use crate::linalg;
use crate::ParamVec;

/// All measurements recorded for one step of a run. Optional entries are
/// filled only when the run computes them (evaluation steps, or every step
/// in verification mode).
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub t: u64,
    /// Squared parameter-space distance to the current target.
    pub tracking_err: f64,
    /// Problem-specific reported measurement.
    pub metric: f64,
    /// Squared drift magnitude applied at this step.
    pub delta_sq: f64,
    /// First-moment tracking error ||m_hat - mean_grad||.
    pub r_norm: Option<f64>,
    /// Squared preconditioner perturbation ||(P - P~) m_hat||^2.
    pub eta_norm_sq: Option<f64>,
    /// Squared projected-gradient mapping norm in the P~^{-1} metric.
    pub pg_norm_sq: Option<f64>,
    /// Positive part of the objective change at the next iterate.
    pub var_inc: Option<f64>,
    /// Tracking bound right-hand sides, when verification is on.
    pub bound_hp: Option<f64>,
    pub bound_exp: Option<f64>,
    pub bound_pg: Option<f64>,
}

impl StepMetrics {
    pub fn new(t: u64, tracking_err: f64, metric: f64, delta_sq: f64) -> Self {
        StepMetrics {
            t,
            tracking_err,
            metric,
            delta_sq,
            r_norm: None,
            eta_norm_sq: None,
            pg_norm_sq: None,
            var_inc: None,
            bound_hp: None,
            bound_exp: None,
            bound_pg: None,
        }
    }
}

/// Exact CSV column order of the run records.
pub const CSV_COLUMNS: &str =
    "t,tracking_err,metric,delta_sq,r_norm,eta_norm_sq,pg_norm_sq,var_inc,bound_hp,bound_exp,bound_pg";

/// Squared norm of `g_map` in the inverse metric of the diagonal
/// preconditioner: sum_j g_j^2 / p_j.
pub fn weighted_pg_norm_sq(g_map: &[f64], p_tilde: &[f64]) -> Result<f64> {
    if g_map.len() != p_tilde.len() {
        return Err(Error::DimensionMismatch {
            expected: p_tilde.len(),
            got: g_map.len(),
        });
    }
    let mut acc = 0.0;
    for (i, (g, p)) in g_map.iter().zip(p_tilde).enumerate() {
        if *p <= 0.0 {
            return Err(Error::NonPositivePreconditioner {
                index: i,
                value: *p,
            });
        }
        acc += g * g / p;
    }
    Ok(acc)
}

/// Running objective-variation budget: the sum of positive parts is
/// non-negative and non-decreasing in the horizon.
pub fn variation_budget(increments: &[f64]) -> f64 {
    increments.iter().map(|x| x.max(0.0)).sum()
}

/// First-moment tracking error ||m_hat - mean_grad||.
pub fn first_moment_residual(m_hat: &[f64], mean_grad: &[f64]) -> f64 {
    linalg::dist_sq(m_hat, mean_grad).sqrt()
}

/// Per-step history needed to decompose the first-moment error into its
/// stale-gradient bias and martingale noise parts.
#[derive(Debug, Clone, Default)]
pub struct MomentHistory {
    /// mean gradients evaluated along the trajectory, g_bar_{k+1}(theta_k)
    pub mean_grads: Vec<ParamVec>,
    /// effective noise of each consumed gradient (clipped draw minus mean)
    pub noises: Vec<ParamVec>,
}

impl MomentHistory {
    pub fn push(&mut self, mean_grad: ParamVec, noise: ParamVec) {
        self.mean_grads.push(mean_grad);
        self.noises.push(noise);
    }

    pub fn len(&self) -> usize {
        self.mean_grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_grads.is_empty()
    }
}

/// Decomposition r = B + N of the first-moment tracking error after step
/// t+1 (history entries 0..=t): B is the weighted sum of stale-gradient
/// gaps, N the weighted noise sum. Returns `None` when the history does
/// not cover the requested step.
pub fn residual_decomposition(
    history: &MomentHistory,
    beta1: f64,
    t: u64,
) -> Option<(ParamVec, ParamVec)> {
    let steps = (t + 1) as usize;
    if history.len() < steps || history.is_empty() {
        return None;
    }
    let dim = history.mean_grads[0].len();
    let current = &history.mean_grads[steps - 1];
    let mut bias = vec![0.0; dim];
    let mut noise = vec![0.0; dim];
    let denom = crate::bounds::one_minus_pow(beta1, t + 1);
    for k in 0..steps {
        let w = (1.0 - beta1) * beta1.powi((steps - 1 - k) as i32) / denom;
        for j in 0..dim {
            bias[j] += w * (history.mean_grads[k][j] - current[j]);
            noise[j] += w * history.noises[k][j];
        }
    }
    Some((bias, noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn pg_norm_trivial_cases() {
        let p = vec![0.5, 2.0, 1.0];
        assert_eq!(weighted_pg_norm_sq(&[0.0, 0.0, 0.0], &p).unwrap(), 0.0);
        let ones = vec![1.0, 1.0, 1.0];
        let g = vec![1.0, -2.0, 3.0];
        assert_eq!(weighted_pg_norm_sq(&g, &ones).unwrap(), 14.0);
    }

    #[test]
    fn pg_norm_matches_quadratic_form() {
        let mut rng = stream(15, "noise");
        for _ in 0..20 {
            let d = 6;
            let g: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..3.0)).collect();
            let got = weighted_pg_norm_sq(&g, &p).unwrap();
            // oracle: x^T diag(1/p) x as an explicit quadratic form
            let mut want = 0.0;
            for j in 0..d {
                want += g[j] * (1.0 / p[j]) * g[j];
            }
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn pg_norm_rejects_nonpositive_preconditioner() {
        assert!(matches!(
            weighted_pg_norm_sq(&[1.0], &[0.0]),
            Err(Error::NonPositivePreconditioner { .. })
        ));
    }

    #[test]
    fn variation_budget_behaviour() {
        assert_eq!(variation_budget(&[]), 0.0);
        assert_eq!(variation_budget(&[0.0, 0.0]), 0.0);
        // single positive jump at t=5 dominates
        let mut incs = vec![0.0; 10];
        incs[5] = 0.3;
        incs[7] = -0.2; // negative changes cost nothing
        assert!((variation_budget(&incs) - 0.3).abs() < 1e-15);
        // monotone in the horizon
        let all = variation_budget(&incs);
        let prefix = variation_budget(&incs[..6]);
        assert!(all >= prefix);
    }

    #[test]
    fn residual_zero_for_constant_gradient_stream() {
        // constant mean gradient and zero noise: m_hat equals the mean,
        // so both the residual and its decomposition vanish
        let g = vec![0.3, -0.7];
        let mut history = MomentHistory::default();
        let beta1 = 0.9;
        let mut m = vec![0.0; 2];
        for t in 0..10u64 {
            for j in 0..2 {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            }
            history.push(g.clone(), vec![0.0, 0.0]);
            let bc = crate::bounds::one_minus_pow(beta1, t + 1);
            let m_hat: Vec<f64> = m.iter().map(|x| x / bc).collect();
            assert!(first_moment_residual(&m_hat, &g) < 1e-12);
            let (bias, noise) = residual_decomposition(&history, beta1, t).unwrap();
            assert!(linalg::norm(&bias) < 1e-12);
            assert!(linalg::norm(&noise) < 1e-12);
        }
    }

    #[test]
    fn residual_decomposition_reconstructs_m_hat_minus_mean() {
        // random gradient stream: m_hat - g_bar_t must equal B + N exactly
        let mut rng = stream(16, "noise");
        let beta1 = 0.9;
        let d = 4;
        let mut m = vec![0.0; d];
        let mut history = MomentHistory::default();
        for t in 0..30u64 {
            let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let noise: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let grad: Vec<f64> = mean.iter().zip(&noise).map(|(a, b)| a + b).collect();
            for j in 0..d {
                m[j] = beta1 * m[j] + (1.0 - beta1) * grad[j];
            }
            history.push(mean.clone(), noise.clone());
            let bc = crate::bounds::one_minus_pow(beta1, t + 1);
            let m_hat: Vec<f64> = m.iter().map(|x| x / bc).collect();
            let r: Vec<f64> = m_hat.iter().zip(&mean).map(|(a, b)| a - b).collect();
            let (bias, noise_sum) = residual_decomposition(&history, beta1, t).unwrap();
            let recon: Vec<f64> = bias.iter().zip(&noise_sum).map(|(a, b)| a + b).collect();
            assert!(
                linalg::dist_sq(&r, &recon).sqrt() < 1e-10,
                "decomposition must reproduce the residual exactly"
            );
        }
    }

    #[test]
    fn decomposition_soft_skips_without_history() {
        let history = MomentHistory::default();
        assert!(residual_decomposition(&history, 0.9, 0).is_none());
    }
}
