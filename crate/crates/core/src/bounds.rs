//! Closed-form evaluation of the finite-time tracking and stationarity
//! bounds: per-step moment-averaging constants, the high-probability and
//! expected tracking right-hand sides, the SGD comparison bound, the
//! asymptotic tracking floor with its burn-in time, and the projected
//! stationarity bounds.
//!
//! All suppressed absolute constants in the comparison bounds are
//! instantiated as 1; callers that need looseness headroom scale the
//! returned values themselves.

use crate::error::{Error, Result};

/// `1 - beta^t`, evaluated without cancellation for beta close to 1.
pub fn one_minus_pow(beta: f64, t: u64) -> f64 {
    debug_assert!((0.0..1.0).contains(&beta));
    -((t as f64) * beta.ln()).exp_m1()
}

/// Bias-correction weight w_{i,t,k} = (1-b) b^{t-1-k} / (1-b^t) for
/// 0 <= k <= t-1. The weights over k sum to one.
pub fn weight(beta: f64, t: u64, k: u64) -> Result<f64> {
    if t == 0 || k >= t {
        return Err(Error::WeightIndexOutOfRange { k, t });
    }
    Ok((1.0 - beta) * beta.powi((t - 1 - k) as i32) / one_minus_pow(beta, t))
}

/// Per-step constants of the moment averages at time index `t >= 1`:
/// kappa is the sum of squared weights, c the lag-weighted sum, omega the
/// maximum weight, vartheta the second-moment transient, and q-/q+/D1 the
/// preconditioner and bias scales.
#[derive(Debug, Clone, Copy)]
pub struct AdamConstants {
    pub kappa: f64,
    pub omega: f64,
    pub c: f64,
    pub vartheta: f64,
    pub q_minus: f64,
    pub q_plus: f64,
    pub d1: f64,
}

pub fn constants(
    t: u64,
    beta1: f64,
    beta2: f64,
    g: f64,
    eps: f64,
    alpha: f64,
    l: f64,
) -> AdamConstants {
    assert!(t >= 1, "constants are defined for t >= 1");
    let pow1 = beta1.powi(t as i32);
    let om1 = one_minus_pow(beta1, t);
    AdamConstants {
        kappa: (1.0 - beta1) * (1.0 + pow1) / ((1.0 + beta1) * om1),
        omega: (1.0 - beta1) / om1,
        c: beta1 / (1.0 - beta1) - (t as f64) * pow1 / om1,
        vartheta: beta2.powi(t as i32) + (1.0 - beta2),
        q_minus: q_minus(g, eps),
        q_plus: q_plus(eps),
        d1: d1(alpha, l, g, eps),
    }
}

pub fn q_minus(g: f64, eps: f64) -> f64 {
    1.0 / (g + eps)
}

pub fn q_plus(eps: f64) -> f64 {
    1.0 / eps
}

/// Stale-gradient displacement scale D1 = alpha L G / eps + 2 G.
pub fn d1(alpha: f64, l: f64, g: f64, eps: f64) -> f64 {
    alpha * l * g / eps + 2.0 * g
}

/// Contraction factor of the preconditioned tracking recursion.
pub fn rho_alpha(alpha: f64, q_minus: f64, mu: f64) -> f64 {
    1.0 - 0.5 * alpha * q_minus * mu
}

/// Problem constants feeding every bound evaluator.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs {
    pub mu: f64,
    pub l: f64,
    /// Almost-sure gradient-norm bound (the harness clip level).
    pub g: f64,
    pub sigma: f64,
    pub d: usize,
    /// Uniform drift bound (or running sup of the realized drift series).
    pub delta_bound: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Failure probability of the high-probability statements.
    pub delta: f64,
    /// Horizon T entering the log(2T/delta) terms.
    pub t_max: u64,
    /// Squared initial tracking error.
    pub init_err: f64,
    /// G_1(theta_0) - G_star, for the stationarity bounds.
    pub g_gap: f64,
    /// Pathwise objective-variation budget, for the stationarity bounds.
    pub var_budget: f64,
}

impl BoundInputs {
    pub fn q_minus(&self) -> f64 {
        q_minus(self.g, self.eps)
    }

    pub fn q_plus(&self) -> f64 {
        q_plus(self.eps)
    }

    pub fn d1(&self) -> f64 {
        d1(self.alpha, self.l, self.g, self.eps)
    }

    pub fn rho(&self) -> f64 {
        rho_alpha(self.alpha, self.q_minus(), self.mu)
    }

    fn log_term(&self) -> f64 {
        (2.0 * self.t_max as f64 / self.delta).ln()
    }

    /// Stepsize cap of the adaptive tracking bound.
    pub fn adam_tracking_cap(&self) -> f64 {
        let qm = self.q_minus();
        let qp = self.q_plus();
        (qm * self.mu / (4.0 * qp * qp * self.l * self.l)).min(1.0 / (qm * self.mu))
    }

    /// Stepsize cap of the SGD tracking bound.
    pub fn sgd_tracking_cap(&self) -> f64 {
        (self.mu / (self.l * self.l)).min(1.0 / self.l)
    }

    /// Stepsize cap of the projected stationarity bound.
    pub fn stationarity_cap(&self) -> f64 {
        1.0 / (4.0 * self.l * self.q_plus())
    }

    /// Largest admissible stepsize of the floor statement.
    pub fn alpha_max(&self) -> f64 {
        let e = self.eps;
        (self.mu * e * e / (4.0 * self.l * self.l * (self.g + e))).min((self.g + e) / self.mu)
    }

    fn require_cap(&self, cap: f64, context: &'static str) -> Result<()> {
        if self.alpha > cap {
            return Err(Error::StepsizeCap {
                alpha: self.alpha,
                cap,
                context,
            });
        }
        Ok(())
    }
}

/// High-probability bound on the squared first-moment tracking error at
/// step t+1: c_{1,t+1} D1 + sigma sqrt(2 d kappa_{1,t+1} log(2T/delta)) +
/// (4G/3) omega_{1,t+1} log(2T/delta).
pub fn r_hp_bound(
    t: u64,
    beta1: f64,
    sigma: f64,
    d: usize,
    g: f64,
    d1: f64,
    t_max: u64,
    delta: f64,
) -> f64 {
    let lg = (2.0 * t_max as f64 / delta).ln();
    let cs = constants(t + 1, beta1, 0.5, g, 1.0, 0.0, 0.0);
    cs.c * d1 + sigma * (2.0 * d as f64 * cs.kappa * lg).sqrt() + 4.0 * g / 3.0 * cs.omega * lg
}

/// Deterministic bound on the squared preconditioner perturbation at step
/// t+1: G^4 eps^-4 vartheta_{2,t+1}.
pub fn eta_bound(t: u64, beta2: f64, g: f64, eps: f64) -> f64 {
    let vartheta = beta2.powi((t + 1) as i32) + (1.0 - beta2);
    g.powi(4) * eps.powi(-4) * vartheta
}

/// High-probability refinement of the preconditioner perturbation bound.
pub fn eta_bound_hp(
    t: u64,
    beta2: f64,
    g: f64,
    eps: f64,
    sigma: f64,
    d: usize,
    t_max: u64,
    delta: f64,
) -> f64 {
    let lg = (2.0 * d as f64 * t_max as f64 / delta).ln();
    let transient = g * g * beta2.powi((t + 1) as i32) / one_minus_pow(beta2, t + 1);
    let fluct = (1.0 - beta2)
        * (4.0 * g * sigma * (2.0 * d as f64 * lg).sqrt() + 2.0 * g * g / 3.0 * lg);
    g * g * eps.powi(-4) * (transient + fluct)
}

fn hp_step_term(inputs: &BoundInputs, ell: u64, drift: f64, lg: f64) -> f64 {
    let qm = inputs.q_minus();
    let qp = inputs.q_plus();
    let amu = inputs.alpha * qm * inputs.mu;
    let cs = constants(
        ell + 1,
        inputs.beta1,
        inputs.beta2,
        inputs.g,
        inputs.eps,
        inputs.alpha,
        inputs.l,
    );
    let r_bound = cs.c * cs.d1
        + inputs.sigma * (2.0 * inputs.d as f64 * cs.kappa * lg).sqrt()
        + 4.0 * inputs.g / 3.0 * cs.omega * lg;
    5.0 / amu * drift * drift
        + 10.0 * inputs.alpha * inputs.g.powi(4) * inputs.eps.powi(-4) / (qm * inputs.mu)
            * cs.vartheta
        + 10.0 * inputs.alpha * qp * qp / (qm * inputs.mu) * r_bound * r_bound
}

/// Right-hand side of the high-probability tracking bound at step `t`,
/// given the realized drift magnitudes `drifts[ell]` for ell < t.
pub fn hp_tracking_rhs(inputs: &BoundInputs, drifts: &[f64], t: u64) -> Result<f64> {
    inputs.require_cap(inputs.adam_tracking_cap(), "adam tracking bound")?;
    assert!(t as usize <= drifts.len(), "need drift entries for all ell < t");
    let rho = inputs.rho();
    let lg = inputs.log_term();
    let mut rhs = rho.powi(t as i32) * inputs.init_err;
    let mut rho_pow = 1.0; // rho^{t-ell-1} starting at ell = t-1
    for ell in (0..t).rev() {
        rhs += rho_pow * hp_step_term(inputs, ell, drifts[ell as usize], lg);
        rho_pow *= rho;
    }
    Ok(rhs)
}

/// The same right-hand side for every t = 0..=drifts.len(), computed with
/// the one-step recursion of the weighted sums. Entry t of the result is
/// the bound at step t.
pub fn hp_tracking_series(inputs: &BoundInputs, drifts: &[f64]) -> Result<Vec<f64>> {
    inputs.require_cap(inputs.adam_tracking_cap(), "adam tracking bound")?;
    let rho = inputs.rho();
    let lg = inputs.log_term();
    let mut out = Vec::with_capacity(drifts.len() + 1);
    let mut weighted_sum = 0.0;
    let mut init_term = inputs.init_err;
    out.push(init_term);
    for (ell, drift) in drifts.iter().enumerate() {
        weighted_sum = rho * weighted_sum + hp_step_term(inputs, ell as u64, *drift, lg);
        init_term *= rho;
        out.push(init_term + weighted_sum);
    }
    Ok(out)
}

/// Right-hand side of the SGD high-probability tracking bound (comparison
/// only; the suppressed absolute constants are taken as 1).
pub fn sgd_hp_rhs(inputs: &BoundInputs, drifts: &[f64], t: u64) -> Result<f64> {
    inputs.require_cap(inputs.sgd_tracking_cap(), "sgd tracking bound")?;
    assert!(t as usize <= drifts.len());
    let rho = 1.0 - inputs.alpha * inputs.mu / 2.0;
    let lg = inputs.log_term();
    let mut drift_sum = 0.0; // sum rho^{t-ell-1} drift^2
    let mut drift_sum2 = 0.0; // sum rho^{2(t-ell-1)} drift^2
    let mut rho_pow = 1.0;
    for ell in (0..t).rev() {
        let dsq = drifts[ell as usize] * drifts[ell as usize];
        drift_sum += rho_pow * dsq;
        drift_sum2 += rho_pow * rho_pow * dsq;
        rho_pow *= rho;
    }
    let a = inputs.alpha;
    let (mu, d, sig) = (inputs.mu, inputs.d as f64, inputs.sigma);
    Ok(rho.powi(t as i32) * inputs.init_err
        + drift_sum / (a * mu)
        + d * sig * sig * a / mu
        + d * sig * sig * a * a * lg
        + (sig * sig * a / mu + a * a * sig * sig * drift_sum2) * lg)
}

/// Right-hand side of the expected tracking bound at step `t`, with
/// `delta_sq` a uniform bound on the expected squared per-step drift.
pub fn expected_tracking_rhs(inputs: &BoundInputs, delta_sq: f64, t: u64) -> Result<f64> {
    inputs.require_cap(inputs.adam_tracking_cap(), "adam tracking bound")?;
    let rho = inputs.rho();
    let qm = inputs.q_minus();
    let qp = inputs.q_plus();
    let mut rhs = rho.powi(t as i32) * inputs.init_err
        + 10.0 * delta_sq / (inputs.alpha * inputs.alpha * qm * qm * inputs.mu * inputs.mu);
    let mut rho_pow = 1.0;
    for ell in (0..t).rev() {
        let cs = constants(
            ell + 1,
            inputs.beta1,
            inputs.beta2,
            inputs.g,
            inputs.eps,
            inputs.alpha,
            inputs.l,
        );
        let first_moment = 2.0 * cs.c * cs.c * cs.d1 * cs.d1
            + 8.0 * inputs.g * inputs.g * cs.kappa;
        rhs += rho_pow
            * (10.0 * inputs.alpha * qp * qp / (qm * inputs.mu) * first_moment
                + 10.0 * inputs.alpha * inputs.g.powi(4) * inputs.eps.powi(-4) / (qm * inputs.mu)
                    * cs.vartheta);
        rho_pow *= rho;
    }
    Ok(rhs)
}

/// Asymptotic tracking floor (unit absolute constants), as a function of
/// the stepsize with every other input held fixed.
pub fn tracking_floor(inputs: &BoundInputs, alpha: f64) -> f64 {
    let qm = inputs.q_minus();
    let qp = inputs.q_plus();
    let lg = inputs.log_term();
    let denom = qm * qm * inputs.mu * inputs.mu;
    let d1a = d1(alpha, inputs.l, inputs.g, inputs.eps);
    let b1 = inputs.beta1;
    inputs.delta_bound * inputs.delta_bound / (denom * alpha * alpha)
        + qp * qp * b1 * b1 * d1a * d1a / (denom * (1.0 - b1) * (1.0 - b1))
        + qp * qp * inputs.d as f64 * inputs.sigma * inputs.sigma / denom * lg
        + qp * qp * inputs.g * inputs.g / denom * lg * lg
        + inputs.g.powi(4) * qp.powi(4) * (1.0 - inputs.beta2) / denom
}

/// Floor evaluation plus the floor-minimizing stepsize and burn-in time.
#[derive(Debug, Clone, Copy)]
pub struct FloorReport {
    /// Floor at the stepsize in the inputs.
    pub e_floor: f64,
    /// Floor-minimizing stepsize over (0, alpha_max].
    pub alpha_star: f64,
    /// Floor at alpha_star.
    pub e_floor_star: f64,
    /// Steps for the geometric transient to fall below the optimal floor.
    pub burn_in: f64,
}

/// Evaluate the tracking floor at the given stepsize, minimize it over the
/// admissible range via golden-section search (1e-6 relative tolerance on
/// alpha), and report the burn-in time at the minimizer.
pub fn floor_and_burnin(inputs: &BoundInputs) -> Result<FloorReport> {
    let alpha_max = inputs.alpha_max();
    if !(alpha_max > 0.0) {
        return Err(Error::EmptyFeasibleRange(format!(
            "alpha_max = {alpha_max}"
        )));
    }
    inputs.require_cap(alpha_max, "tracking floor")?;
    let e_floor = tracking_floor(inputs, inputs.alpha);
    let f = |x: f64| tracking_floor(inputs, x.exp());
    let lo = alpha_max.ln() - 9.0 * std::f64::consts::LN_10;
    let hi = alpha_max.ln();
    let x_star = golden_section_min(f, lo, hi, 1e-6);
    let alpha_star = x_star.exp().min(alpha_max);
    let e_floor_star = tracking_floor(inputs, alpha_star);
    let qm = inputs.q_minus();
    let burn_in = if inputs.init_err > e_floor_star {
        (inputs.init_err / e_floor_star).ln() / (qm * inputs.mu * alpha_star)
    } else {
        0.0
    };
    Ok(FloorReport {
        e_floor,
        alpha_star,
        e_floor_star,
        burn_in,
    })
}

/// Minimize a unimodal function on [a, b] to the given tolerance on the
/// argument.
fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Right-hand side of the high-probability projected stationarity bound
/// for the average squared preconditioned projected-gradient mapping over
/// `t_total` steps, with pathwise variation budget `var_budget`.
pub fn projected_stationarity_rhs(
    inputs: &BoundInputs,
    var_budget: f64,
    t_total: u64,
) -> Result<f64> {
    inputs.require_cap(inputs.stationarity_cap(), "projected stationarity bound")?;
    assert!(t_total >= 1);
    let qm = inputs.q_minus();
    let qp = inputs.q_plus();
    let tt = t_total as f64;
    let lg = (2.0 * tt / inputs.delta).ln();
    let mut vartheta_sum = 0.0;
    let mut bracket_sum = 0.0;
    for tau in 1..=t_total {
        let cs = constants(
            tau,
            inputs.beta1,
            inputs.beta2,
            inputs.g,
            inputs.eps,
            inputs.alpha,
            inputs.l,
        );
        vartheta_sum += cs.vartheta;
        let bracket = cs.c * cs.d1
            + inputs.sigma * (2.0 * inputs.d as f64 * cs.kappa * lg).sqrt()
            + 4.0 * inputs.g / 3.0 * cs.omega * lg;
        bracket_sum += bracket * bracket;
    }
    Ok(
        8.0 * (inputs.g_gap + var_budget) / (inputs.alpha * tt)
            + 12.0 / qm * inputs.g.powi(4) * inputs.eps.powi(-4) / tt * vartheta_sum
            + 12.0 * qp / tt * bracket_sum,
    )
}

/// Decay/floor split of the averaged stationarity bound, using the
/// closed-form partial-sum estimates of the averaged constants
/// (unit absolute constants).
pub fn decay_floor_split(inputs: &BoundInputs, t_total: u64) -> Result<(f64, f64)> {
    inputs.require_cap(inputs.stationarity_cap(), "projected stationarity bound")?;
    assert!(t_total >= 1);
    let qm = inputs.q_minus();
    let qp = inputs.q_plus();
    let tt = t_total as f64;
    let lg = (2.0 * tt / inputs.delta).ln();
    let (b1, b2) = (inputs.beta1, inputs.beta2);
    let d1v = inputs.d1();
    let g4e4 = inputs.g.powi(4) * inputs.eps.powi(-4);
    let dsig = inputs.d as f64 * inputs.sigma * inputs.sigma;
    let decay = (inputs.g_gap + inputs.var_budget) / inputs.alpha
        + g4e4 / (qm * (1.0 - b2))
        + (dsig * qp / (1.0 + b1) * tt.ln() + qp * inputs.g * inputs.g * lg) * lg;
    let floor = dsig * qp * (1.0 - b1) / (1.0 + b1) * lg
        + qp * inputs.g * inputs.g * (1.0 - b1) * (1.0 - b1) * lg * lg
        + qp * d1v * d1v * b1 * b1 / ((1.0 - b1) * (1.0 - b1))
        + g4e4 * (1.0 - b2) / qm;
    Ok((decay, floor))
}
