//! One experiment run: the drift/sample/clip/step loop with optional
//! per-step bound instrumentation.

use super::config::{ExperimentConfig, OptimizerKind, OptimizerSpec};
use crate::bounds::{self, BoundInputs};
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics::{self, MomentHistory, StepMetrics};
use crate::optim::{
    adam_step, build_step_decay_plan, predictable_preconditioner, projected_gradient_mapping,
    sgd_step, sgdm_step, AdamParams, AdamState, StepDecayPlan,
};
use crate::rng::{stream, RunStreams};
use crate::ParamVec;

/// Where and how a run died, when it did.
#[derive(Debug, Clone)]
pub struct DivergenceInfo {
    pub step: u64,
    pub optimizer: String,
    pub lr: f64,
}

/// Full output of one (optimizer, lr, seed) run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub optimizer: String,
    pub lr: f64,
    pub seed: u64,
    pub rows: Vec<StepMetrics>,
    pub clip_events: u64,
    pub diverged: Option<DivergenceInfo>,
    /// Realized drift magnitudes (the schedule values).
    pub drifts: Vec<f64>,
    /// Squared tracking error at every step, kept in verification mode.
    pub tracking_sq: Vec<f64>,
    pub init_err: f64,
    /// Objective value gap of the first-step objective above the uniform
    /// lower bound (zero) at the initial iterate.
    pub g1_gap: f64,
    /// Pathwise variation budget (verification mode, exact objectives).
    pub var_budget: f64,
    /// Average squared weighted projected-gradient norm over all steps.
    pub pg_avg: Option<f64>,
    pub eta_violations: u64,
    pub recursion_violations: u64,
    /// Largest observed LHS - RHS of the one-step recursion.
    pub recursion_max_gap: f64,
    /// Whether the tracking error ever exceeded the high-probability bound.
    pub hp_violated: Option<bool>,
    pub history: Option<MomentHistory>,
    /// Running supremum of the noise schedule over the horizon.
    pub sigma_sup: f64,
}

impl RunRecord {
    /// Mean problem metric over evaluation rows in the second half of the
    /// run; infinite when the run diverged.
    pub fn tail_metric(&self, horizon: u64) -> f64 {
        if self.diverged.is_some() {
            return f64::INFINITY;
        }
        let cutoff = horizon / 2;
        let tail: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.t >= cutoff)
            .map(|r| r.metric)
            .collect();
        if tail.is_empty() {
            f64::INFINITY
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

enum OptState {
    Sgd,
    Sgdm {
        prev: ParamVec,
    },
    Adam {
        state: AdamState,
        plan: Option<StepDecayPlan>,
    },
}

impl ExperimentConfig {
    /// Parameter count of the configured problem.
    pub fn problem_dim(&self) -> usize {
        use crate::problems::ProblemKind::*;
        match self.problem.kind {
            Quadratic | LeastSquares | PhaseRetrieval | LogisticLabelFlip | Lasso => self.problem.d,
            MlpTeacherStudent => self.problem.width * self.problem.d + 2 * self.problem.width + 1,
            MatrixFactorization => 2 * self.problem.n * self.problem.rank,
        }
    }
}

fn bound_inputs_for(
    cfg: &ExperimentConfig,
    opt: &OptimizerSpec,
    lr: f64,
    record: &RunRecord,
    mu: f64,
    l: f64,
) -> BoundInputs {
    BoundInputs {
        mu,
        l,
        g: cfg.clip_norm,
        sigma: record.sigma_sup,
        d: cfg.problem_dim(),
        delta_bound: cfg.drift.sup_on_horizon(cfg.horizon),
        alpha: lr,
        beta1: opt.beta1,
        beta2: opt.beta2,
        eps: opt.eps,
        delta: cfg.verify.delta,
        t_max: cfg.horizon,
        init_err: record.init_err,
        g_gap: record.g1_gap,
        var_budget: record.var_budget,
    }
}

/// Run one (optimizer, lr, seed) combination to completion. Deterministic:
/// the same arguments produce bit-identical records. Errors are
/// configuration-level (stepsize caps, missing curvature); divergence of
/// the iterates is reported inside the record instead.
pub fn run_single(
    cfg: &ExperimentConfig,
    opt: &OptimizerSpec,
    lr: f64,
    seed: u64,
) -> Result<RunRecord> {
    let mut streams = RunStreams::new(seed);
    let mut smoment_rng = stream(seed, "smoment");
    let mut problem = cfg.problem.build(&mut streams.init);
    let proj = cfg.projection();
    let verify = cfg.verify;
    let is_adam = opt.kind == OptimizerKind::Adam;
    let horizon = cfg.horizon;
    let certified = problem.curvature();

    let mut theta = problem.init_iterate();
    let init_err = linalg::dist_sq(&theta, problem.target());
    let sigma_sup = (0..horizon).fold(0.0f64, |m, t| m.max(cfg.noise.value(t)));

    let mut record = RunRecord {
        optimizer: opt.kind.as_str().to_string(),
        lr,
        seed,
        rows: Vec::new(),
        clip_events: 0,
        diverged: None,
        drifts: Vec::with_capacity(horizon as usize),
        tracking_sq: Vec::new(),
        init_err,
        g1_gap: 0.0,
        var_budget: 0.0,
        pg_avg: None,
        eta_violations: 0,
        recursion_violations: 0,
        recursion_max_gap: f64::NEG_INFINITY,
        hp_violated: None,
        history: None,
        sigma_sup,
    };

    // recursion coefficients need certified curvature and the stepsize cap
    let recursion = if verify.recursion && is_adam {
        let (mu, l) = certified
            .ok_or_else(|| Error::Config("recursion check needs certified curvature".into()))?;
        let qm = bounds::q_minus(cfg.clip_norm, opt.eps);
        let qp = bounds::q_plus(opt.eps);
        let cap = (qm * mu / (4.0 * qp * qp * l * l)).min(1.0 / (qm * mu));
        if lr > cap {
            return Err(Error::StepsizeCap {
                alpha: lr,
                cap,
                context: "one-step recursion check",
            });
        }
        if opt.decay_alpha_star.is_some() {
            return Err(Error::Config(
                "recursion check does not support step decay".into(),
            ));
        }
        Some((mu, qm, qp))
    } else {
        None
    };

    let mut opt_state = match opt.kind {
        OptimizerKind::Sgd => OptState::Sgd,
        OptimizerKind::Sgdm => OptState::Sgdm {
            prev: theta.clone(),
        },
        OptimizerKind::Adam => {
            let params = AdamParams {
                alpha: lr,
                beta1: opt.beta1,
                beta2: opt.beta2,
                eps: opt.eps,
            };
            let plan = match opt.decay_alpha_star {
                Some(alpha_star) => {
                    let (mu, l) = certified.ok_or_else(|| {
                        Error::Config(
                            "step decay needs certified curvature (quadratic or least squares)"
                                .into(),
                        )
                    })?;
                    let qm = bounds::q_minus(cfg.clip_norm, opt.eps);
                    let inputs = bound_inputs_for(cfg, opt, lr, &record, mu, l);
                    let floor0 = bounds::tracking_floor(&inputs, lr);
                    Some(build_step_decay_plan(
                        lr,
                        alpha_star,
                        qm,
                        mu,
                        init_err.max(2.0 * floor0),
                        floor0,
                    )?)
                }
                None => None,
            };
            OptState::Adam {
                state: AdamState::new(problem.dim(), params),
                plan,
            }
        }
    };

    if verify.enabled {
        record.tracking_sq = Vec::with_capacity(horizon as usize + 1);
        if is_adam {
            record.history = Some(MomentHistory::default());
        }
    }

    let want_ptilde = is_adam && (problem.has_analytic_second_moment() || verify.enabled);
    let mut pg_sum = 0.0;
    let mut pg_count = 0u64;
    let mut increments: Vec<f64> = Vec::new();
    let mut pending_var_row: Option<usize> = None; // row waiting for its var_inc
    let track_var = verify.enabled && problem.exact_objective();
    let is_eval = |t: u64| t % cfg.eval_every == 0;

    for t in 0..horizon {
        let e_t = linalg::dist_sq(&theta, problem.target());
        if verify.enabled {
            record.tracking_sq.push(e_t);
        }

        // objective before this step's drift, for the variation increment
        let need_var_here = t >= 1 && (track_var || pending_var_row.is_some());
        let v_old = if need_var_here {
            Some(problem.objective(&theta) + problem.noise_offset(cfg.noise.value(t - 1)))
        } else {
            None
        };

        let eval_row = is_eval(t);
        let row_idx = if eval_row {
            let metric = problem.evaluate_metric(&theta);
            let delta_t = cfg.drift.value(t);
            record
                .rows
                .push(StepMetrics::new(t, e_t, metric, delta_t * delta_t));
            Some(record.rows.len() - 1)
        } else {
            None
        };

        let delta_t = cfg.drift.value(t);
        problem.drift(delta_t, &mut streams.drift)?;
        record.drifts.push(delta_t);
        let sigma_t = cfg.noise.value(t);
        problem.set_noise_level(sigma_t);

        if let Some(v_old) = v_old {
            let v_new = problem.objective(&theta) + problem.noise_offset(sigma_t);
            let inc = (v_new - v_old).max(0.0);
            if track_var {
                increments.push(inc);
                record.var_budget += inc;
            }
            if let Some(idx) = pending_var_row.take() {
                record.rows[idx].var_inc = Some(inc);
            }
        }
        if t == 0 {
            record.g1_gap = problem.objective(&theta) + problem.noise_offset(sigma_t);
        }

        let instrument = verify.enabled || eval_row;

        // predictable preconditioner from the pre-update moment state
        let p_tilde = if want_ptilde && instrument {
            let s_next = problem.second_moment(&theta, sigma_t, cfg.batch, &mut smoment_rng)?;
            match &opt_state {
                OptState::Adam { state, .. } => Some(predictable_preconditioner(state, &s_next)?),
                _ => None,
            }
        } else {
            None
        };

        let (mut grad, mean_grad) = if instrument {
            let gs = problem.sample_gradient(&theta, sigma_t, cfg.batch, &mut streams.noise)?;
            (gs.grad, Some(gs.mean_grad))
        } else {
            (
                problem.sample_gradient_fast(&theta, sigma_t, cfg.batch, &mut streams.noise)?,
                None,
            )
        };
        if linalg::clip_norm(&mut grad, cfg.clip_norm) {
            record.clip_events += 1;
        }

        let step_result: Result<ParamVec> = match &mut opt_state {
            OptState::Sgd => sgd_step(&theta, &grad, lr, &proj),
            OptState::Sgdm { prev } => sgdm_step(&theta, &grad, lr, opt.momentum, prev, &proj),
            OptState::Adam { state, plan } => {
                if let Some(plan) = plan {
                    let (alpha_k, restart) = plan.stepsize_at(t);
                    if restart {
                        state.restart();
                    }
                    state.params.alpha = alpha_k;
                }
                adam_step(state, &grad, &proj, &theta).map(|out| {
                    if let Some(mean) = &mean_grad {
                        let r_norm = metrics::first_moment_residual(&out.m_hat, mean);
                        if let Some(idx) = row_idx {
                            record.rows[idx].r_norm = Some(r_norm);
                        }
                        if let Some(pt) = &p_tilde {
                            let eta_sq: f64 = out
                                .precond
                                .iter()
                                .zip(pt)
                                .zip(&out.m_hat)
                                .map(|((p, ptl), m)| {
                                    let e = (p - ptl) * m;
                                    e * e
                                })
                                .sum();
                            let g_map = projected_gradient_mapping(
                                &theta,
                                mean,
                                pt,
                                state.params.alpha,
                                &proj,
                            );
                            let pg = metrics::weighted_pg_norm_sq(&g_map, pt)
                                .expect("positive preconditioner");
                            if verify.enabled {
                                pg_sum += pg;
                                pg_count += 1;
                            }
                            if let Some(idx) = row_idx {
                                record.rows[idx].eta_norm_sq = Some(eta_sq);
                                record.rows[idx].pg_norm_sq = Some(pg);
                            }
                            if verify.eta {
                                // the counter has advanced; state.t is the
                                // bound index of this step's perturbation
                                let bound = bounds::eta_bound(
                                    state.t - 1,
                                    state.params.beta2,
                                    cfg.clip_norm,
                                    state.params.eps,
                                );
                                if eta_sq > bound {
                                    record.eta_violations += 1;
                                }
                            }
                            if let Some((mu, qm, qp)) = recursion {
                                let e_next = linalg::dist_sq(&out.theta, problem.target());
                                let amu = state.params.alpha * qm * mu;
                                let rhs = (1.0 - 0.5 * amu) * e_t
                                    + 5.0 / amu * delta_t * delta_t
                                    + 10.0 * state.params.alpha * qp * qp / (qm * mu)
                                        * r_norm
                                        * r_norm
                                    + 10.0 * state.params.alpha / (qm * mu) * eta_sq;
                                let gap = e_next - rhs;
                                record.recursion_max_gap = record.recursion_max_gap.max(gap);
                                if gap > 1e-9 {
                                    record.recursion_violations += 1;
                                }
                            }
                        }
                        if let Some(history) = record.history.as_mut() {
                            let noise_eff: ParamVec =
                                grad.iter().zip(mean).map(|(g, m)| g - m).collect();
                            history.push(mean.clone(), noise_eff);
                        }
                    }
                    out.theta
                })
            }
        };

        match step_result {
            Ok(next) if linalg::all_finite(&next) => theta = next,
            _ => {
                record.diverged = Some(DivergenceInfo {
                    step: t,
                    optimizer: opt.kind.as_str().to_string(),
                    lr,
                });
                break;
            }
        }

        if eval_row && t + 1 < horizon {
            pending_var_row = row_idx;
        }
    }

    // final row and final tracking error
    if record.diverged.is_none() {
        let e_final = linalg::dist_sq(&theta, problem.target());
        if verify.enabled {
            record.tracking_sq.push(e_final);
        }
        if horizon % cfg.eval_every == 0 {
            let metric = problem.evaluate_metric(&theta);
            record
                .rows
                .push(StepMetrics::new(horizon, e_final, metric, 0.0));
        }
    }

    if verify.enabled && pg_count > 0 {
        record.pg_avg = Some(pg_sum / pg_count as f64);
    }

    backfill_bounds(cfg, opt, lr, &mut record, certified, &increments)?;
    Ok(record)
}

/// Join the bound series into the recorded rows and evaluate the
/// high-probability tracking check.
fn backfill_bounds(
    cfg: &ExperimentConfig,
    opt: &OptimizerSpec,
    lr: f64,
    record: &mut RunRecord,
    certified: Option<(f64, f64)>,
    increments: &[f64],
) -> Result<()> {
    let verify = cfg.verify;
    if !verify.enabled || opt.kind != OptimizerKind::Adam || record.diverged.is_some() {
        return Ok(());
    }
    if verify.hp {
        let (mu, l) = certified
            .ok_or_else(|| Error::Config("hp bound check needs certified curvature".into()))?;
        let inputs = bound_inputs_for(cfg, opt, lr, record, mu, l);
        let series = bounds::hp_tracking_series(&inputs, &record.drifts)?;
        let violated = record
            .tracking_sq
            .iter()
            .enumerate()
            .any(|(t, e_sq)| *e_sq > series[t]);
        record.hp_violated = Some(violated);
        let delta_sq_bound = inputs.delta_bound * inputs.delta_bound;
        for row in record.rows.iter_mut() {
            let idx = row.t as usize;
            if idx < series.len() {
                row.bound_hp = Some(series[idx]);
            }
            row.bound_exp = Some(bounds::expected_tracking_rhs(
                &inputs,
                delta_sq_bound,
                row.t,
            )?);
        }
    }
    if verify.pg {
        let (mu, l) = certified
            .ok_or_else(|| Error::Config("pg bound check needs certified curvature".into()))?;
        let inputs = bound_inputs_for(cfg, opt, lr, record, mu, l);
        // prefix[k] = variation budget over the first k increments
        let mut prefix = Vec::with_capacity(increments.len() + 1);
        prefix.push(0.0);
        for inc in increments {
            prefix.push(prefix.last().unwrap() + inc);
        }
        for row in record.rows.iter_mut() {
            if row.t == 0 {
                continue;
            }
            let k = ((row.t - 1) as usize).min(increments.len());
            row.bound_pg = Some(bounds::projected_stationarity_rhs(
                &inputs, prefix[k], row.t,
            )?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;

    fn quadratic_cfg(extra: &str) -> ExperimentConfig {
        let text = format!(
            "problem.kind = quadratic\nproblem.d = 8\nproblem.mu = 0.5\nrun.T = 60\nrun.eval_every = 20\noptim.kind = adam\noptim.eps = 1.0\nrun.lr_grid = [0.01]\n{extra}"
        );
        ExperimentConfig::parse(&text, &[]).unwrap()
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = quadratic_cfg("drift.kind = log\ndrift.scale = 0.05\nnoise.offset = 0.2\n");
        let opt = cfg.optimizers[0].clone();
        let a = run_single(&cfg, &opt, 0.01, 3).unwrap();
        let b = run_single(&cfg, &opt, 0.01, 3).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.clip_events, b.clip_events);
        let c = run_single(&cfg, &opt, 0.01, 4).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn noiseless_driftless_sgd_contracts_geometrically() {
        let text = "problem.kind = quadratic\nproblem.d = 4\nproblem.mu = 0.5\nrun.T = 100\nrun.eval_every = 20\noptim.kind = sgd\nrun.lr_grid = [0.4]\n";
        let cfg = ExperimentConfig::parse(text, &[]).unwrap();
        let opt = cfg.optimizers[0].clone();
        let rec = run_single(&cfg, &opt, 0.4, 0).unwrap();
        // e_{t+1} = (1 - alpha mu)^2 e_t with alpha mu = 0.2
        let rate: f64 = (1.0 - 0.4 * 0.5) * (1.0 - 0.4 * 0.5);
        for w in rec.rows.windows(2) {
            let expect = w[0].tracking_err * rate.powi((w[1].t - w[0].t) as i32);
            assert!(
                (w[1].tracking_err - expect).abs() < 1e-10 * expect.max(1e-30),
                "geometric decay violated: {} -> {}",
                w[0].tracking_err,
                w[1].tracking_err
            );
        }
    }

    #[test]
    fn drift_and_noise_streams_are_optimizer_independent() {
        let text = "problem.kind = quadratic\nproblem.d = 5\nrun.T = 40\ndrift.kind = log\ndrift.scale = 0.1\nnoise.offset = 0.3\noptim.kind = [sgd, adam]\nrun.lr_grid = [0.01]\n";
        let cfg = ExperimentConfig::parse(text, &[]).unwrap();
        let sgd = run_single(&cfg, &cfg.optimizers[0], 0.01, 7).unwrap();
        let adam = run_single(&cfg, &cfg.optimizers[1], 0.01, 7).unwrap();
        // same seed => identical drift series regardless of optimizer
        assert_eq!(sgd.drifts, adam.drifts);
        assert_eq!(sgd.init_err, adam.init_err);
    }

    #[test]
    fn divergence_is_reported_not_panicked() {
        // absurd learning rate without projection blows up the iterates
        let text = "problem.kind = quadratic\nproblem.d = 4\nproblem.mu = 2.0\nrun.T = 2000\nrun.clip_norm = 1e300\nnoise.offset = 1.0\noptim.kind = sgd\nrun.lr_grid = [1e12]\n";
        let cfg = ExperimentConfig::parse(text, &[]).unwrap();
        let rec = run_single(&cfg, &cfg.optimizers[0], 1e12, 0).unwrap();
        assert!(rec.diverged.is_some());
        assert!(rec.tail_metric(2000).is_infinite());
    }

    #[test]
    fn box_projection_keeps_iterates_inside() {
        let cfg = quadratic_cfg("optim.box = [-0.5, 0.5]\nnoise.offset = 5.0\n");
        let opt = cfg.optimizers[0].clone();
        let rec = run_single(&cfg, &opt, 0.01, 1).unwrap();
        assert!(rec.diverged.is_none());
        for row in &rec.rows {
            assert!(row.tracking_err.is_finite());
        }
    }

    #[test]
    fn verify_mode_populates_instrumentation() {
        let cfg = quadratic_cfg(
            "verify.enable = true\nverify.eta = true\nverify.recursion = true\nnoise.offset = 0.4\ndrift.kind = constant\ndrift.offset = 0.02\n",
        );
        let opt = cfg.optimizers[0].clone();
        let rec = run_single(&cfg, &opt, 0.01, 5).unwrap();
        assert_eq!(rec.tracking_sq.len() as u64, cfg.horizon + 1);
        assert_eq!(rec.eta_violations, 0, "eta bound must hold pathwise");
        assert_eq!(rec.recursion_violations, 0, "recursion must hold pathwise");
        assert!(rec.pg_avg.is_some());
        let eval_row = &rec.rows[1];
        assert!(eval_row.r_norm.is_some());
        assert!(eval_row.eta_norm_sq.is_some());
        assert!(eval_row.pg_norm_sq.is_some());
        assert!(rec.rows[0].var_inc.is_some());
    }

    #[test]
    fn recursion_check_rejects_stepsize_above_cap() {
        let cfg = quadratic_cfg("verify.recursion = true\n");
        let opt = cfg.optimizers[0].clone();
        let err = run_single(&cfg, &opt, 1.0, 0);
        assert!(matches!(err, Err(Error::StepsizeCap { .. })));
    }

    #[test]
    fn hp_bound_columns_join_eval_rows() {
        let cfg = quadratic_cfg(
            "verify.hp = true\nnoise.offset = 0.3\ndrift.kind = constant\ndrift.offset = 0.01\n",
        );
        let opt = cfg.optimizers[0].clone();
        let rec = run_single(&cfg, &opt, 0.01, 2).unwrap();
        assert_eq!(rec.hp_violated, Some(false), "conservative bound must hold");
        for row in &rec.rows {
            assert!(row.bound_hp.is_some());
            assert!(row.bound_exp.is_some());
            assert!(row.bound_hp.unwrap() >= row.tracking_err);
        }
    }
}
