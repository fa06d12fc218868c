//! Lasso regression with an s-sparse drifting target:
//! F_t(theta) = 1/(2n) ||X theta - X beta*_t||^2 + lambda ||theta||_1.
//! The target's support is fixed for all time and the drift is restricted
//! to it. The subgradient of the l1 term is sign(theta) with 0 at 0.

use super::{GradientSample, Problem, ProblemKind, ProblemSpec};
use crate::error::Result;
use crate::linalg::{self, Mat};
use crate::rng::RunRng;
use crate::sched::{advance_target, DriftMode};
use crate::ParamVec;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_distr::StandardNormal;

pub struct Lasso {
    x: Mat,
    lambda: f64,
    support: Vec<usize>,
    target: ParamVec,
    /// Cached clean signal X beta*, refreshed on drift.
    clean_signal: ParamVec,
}

fn subgrad_sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Lasso {
    pub fn new(spec: &ProblemSpec, rng: &mut RunRng) -> Self {
        let (d, n, s) = (spec.d, spec.n, spec.sparsity);
        assert!(s <= d);
        let mut x = Mat::gaussian(rng, n, d);
        linalg::scale(&mut x.data, 1.0 / (d as f64).sqrt());
        let mut support: Vec<usize> = index_sample(rng, d, s).into_vec();
        support.sort_unstable();
        let mut target = vec![0.0; d];
        for idx in &support {
            target[*idx] = rng.sample(StandardNormal);
        }
        let mut p = Lasso {
            x,
            lambda: spec.lambda,
            support,
            target,
            clean_signal: vec![0.0; n],
        };
        p.refresh_signal();
        p
    }

    fn refresh_signal(&mut self) {
        self.clean_signal = self.x.matvec(&self.target);
    }

    /// Gradient of the smooth part only, 1/n X^T (X theta - X beta*).
    pub fn smooth_gradient(&self, theta: &[f64]) -> Result<ParamVec> {
        self.check_dim(theta)?;
        let mut resid = self.x.matvec(theta);
        for (r, c) in resid.iter_mut().zip(&self.clean_signal) {
            *r -= c;
        }
        let mut g = self.x.t_matvec(&resid);
        linalg::scale(&mut g, 1.0 / self.x.rows as f64);
        Ok(g)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }
}

impl Problem for Lasso {
    fn kind(&self) -> ProblemKind {
        ProblemKind::Lasso
    }

    fn dim(&self) -> usize {
        self.target.len()
    }

    fn target(&self) -> &[f64] {
        &self.target
    }

    fn init_iterate(&self) -> ParamVec {
        vec![0.0; self.dim()]
    }

    fn curvature(&self) -> Option<(f64, f64)> {
        None
    }

    fn exact_objective(&self) -> bool {
        true
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let resid: f64 = self
            .x
            .matvec(theta)
            .iter()
            .zip(&self.clean_signal)
            .map(|(r, c)| (r - c) * (r - c))
            .sum();
        let l1: f64 = theta.iter().map(|t| t.abs()).sum();
        0.5 * resid / self.x.rows as f64 + self.lambda * l1
    }

    fn noise_offset(&self, sigma_t: f64) -> f64 {
        0.5 * sigma_t * sigma_t
    }

    fn mean_gradient(&self, theta: &[f64]) -> Result<ParamVec> {
        let mut g = self.smooth_gradient(theta)?;
        for (gi, t) in g.iter_mut().zip(theta) {
            *gi += self.lambda * subgrad_sign(*t);
        }
        Ok(g)
    }

    fn evaluate_metric(&self, theta: &[f64]) -> f64 {
        // signal MSE 1/n ||X(theta - beta*)||^2
        let resid: f64 = self
            .x
            .matvec(theta)
            .iter()
            .zip(&self.clean_signal)
            .map(|(r, c)| (r - c) * (r - c))
            .sum();
        resid / self.x.rows as f64
    }

    fn sample_gradient(
        &self,
        theta: &[f64],
        sigma_t: f64,
        batch: usize,
        rng: &mut RunRng,
    ) -> Result<GradientSample> {
        let mean = self.mean_gradient(theta)?;
        let grad = self.sample_gradient_fast(theta, sigma_t, batch, rng)?;
        Ok(GradientSample::from_parts(grad, mean))
    }

    fn sample_gradient_fast(
        &self,
        theta: &[f64],
        sigma_t: f64,
        batch: usize,
        rng: &mut RunRng,
    ) -> Result<ParamVec> {
        self.check_dim(theta)?;
        self.check_sigma(sigma_t)?;
        assert!(batch >= 1);
        let mut grad = vec![0.0; self.dim()];
        let coeff = 1.0 / batch as f64;
        for _ in 0..batch {
            let i = rng.gen_range(0..self.x.rows);
            let row = self.x.row(i);
            let y = self.clean_signal[i] + sigma_t * rng.sample::<f64, _>(StandardNormal);
            let resid = linalg::dot(row, theta) - y;
            linalg::axpy(&mut grad, coeff * resid, row);
        }
        for (gi, t) in grad.iter_mut().zip(theta) {
            *gi += self.lambda * subgrad_sign(*t);
        }
        Ok(grad)
    }

    fn drift(&mut self, delta_t: f64, rng: &mut RunRng) -> Result<()> {
        let mode = DriftMode::Support(self.support.clone());
        advance_target(&mut self.target, delta_t, &mode, rng)?;
        if delta_t != 0.0 {
            self.refresh_signal();
        }
        Ok(())
    }
}
