//! Phase retrieval: measurements y = (x^T w*)^2 + sigma eps over a fixed
//! pool of Gaussian sensing vectors; the model is warm-started at the
//! initial target. Prediction MSE is reported because the sign of the
//! parameter vector is not identifiable from squared measurements.

use super::{GradientSample, Problem, ProblemKind, ProblemSpec};
use crate::error::Result;
use crate::linalg::{self, Mat};
use crate::rng::RunRng;
use crate::sched::{advance_target, DriftMode};
use crate::ParamVec;
use rand::Rng;
use rand_distr::StandardNormal;

pub struct PhaseRetrieval {
    pool: Mat,
    target: ParamVec,
    /// Cached noiseless teacher measurements (x_i^T w*)^2.
    teacher_vals: ParamVec,
}

impl PhaseRetrieval {
    pub fn new(spec: &ProblemSpec, rng: &mut RunRng) -> Self {
        let target = linalg::gaussian_vec(rng, spec.d);
        let pool = Mat::gaussian(rng, spec.val_size, spec.d);
        let mut p = PhaseRetrieval {
            pool,
            target,
            teacher_vals: vec![0.0; spec.val_size],
        };
        p.refresh_teacher_vals();
        p
    }

    fn refresh_teacher_vals(&mut self) {
        for i in 0..self.pool.rows {
            let ip = linalg::dot(self.pool.row(i), &self.target);
            self.teacher_vals[i] = ip * ip;
        }
    }
}

impl Problem for PhaseRetrieval {
    fn kind(&self) -> ProblemKind {
        ProblemKind::PhaseRetrieval
    }

    fn dim(&self) -> usize {
        self.target.len()
    }

    fn target(&self) -> &[f64] {
        &self.target
    }

    fn init_iterate(&self) -> ParamVec {
        self.target.clone()
    }

    fn curvature(&self) -> Option<(f64, f64)> {
        None
    }

    fn exact_objective(&self) -> bool {
        false
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        0.5 * self.evaluate_metric(theta)
    }

    fn noise_offset(&self, sigma_t: f64) -> f64 {
        0.5 * sigma_t * sigma_t
    }

    fn mean_gradient(&self, theta: &[f64]) -> Result<ParamVec> {
        self.check_dim(theta)?;
        let mut grad = vec![0.0; self.dim()];
        let coeff = 2.0 / self.pool.rows as f64;
        for i in 0..self.pool.rows {
            let x = self.pool.row(i);
            let ip = linalg::dot(x, theta);
            let resid = ip * ip - self.teacher_vals[i];
            linalg::axpy(&mut grad, coeff * resid * ip, x);
        }
        Ok(grad)
    }

    fn evaluate_metric(&self, theta: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.pool.rows {
            let ip = linalg::dot(self.pool.row(i), theta);
            let diff = ip * ip - self.teacher_vals[i];
            acc += diff * diff;
        }
        acc / self.pool.rows as f64
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
        let coeff = 2.0 / batch as f64;
        for _ in 0..batch {
            let i = rng.gen_range(0..self.pool.rows);
            let x = self.pool.row(i);
            let y = self.teacher_vals[i] + sigma_t * rng.sample::<f64, _>(StandardNormal);
            let ip = linalg::dot(x, theta);
            linalg::axpy(&mut grad, coeff * (ip * ip - y) * ip, x);
        }
        Ok(grad)
    }

    fn drift(&mut self, delta_t: f64, rng: &mut RunRng) -> Result<()> {
        advance_target(&mut self.target, delta_t, &DriftMode::FullSpace, rng)?;
        if delta_t != 0.0 {
            self.refresh_teacher_vals();
        }
        Ok(())
    }
}
