//! Isotropic quadratic tracking: F_t(theta) = (mu/2) ||theta - theta*_t||^2
//! observed through gradients with additive Gaussian noise of total
//! variance sigma_t^2 (per-coordinate standard deviation sigma_t/sqrt(d)),
//! matching the sub-Gaussian convention on the noise norm.

use super::{GradientSample, Problem, ProblemKind, ProblemSpec};
use crate::error::Result;
use crate::linalg;
use crate::rng::RunRng;
use crate::sched::{advance_target, DriftMode};
use crate::ParamVec;
use rand::Rng;
use rand_distr::StandardNormal;

pub struct Quadratic {
    mu: f64,
    target: ParamVec,
    init: ParamVec,
}

impl Quadratic {
    pub fn new(spec: &ProblemSpec, rng: &mut RunRng) -> Self {
        assert!(spec.mu > 0.0);
        let target = vec![0.0; spec.d];
        // start at a random point at distance init_dist from the target
        let mut offset = linalg::gaussian_vec(rng, spec.d);
        let n = linalg::norm(&offset);
        linalg::scale(&mut offset, spec.init_dist / n);
        Quadratic {
            mu: spec.mu,
            target,
            init: offset,
        }
    }
}

impl Problem for Quadratic {
    fn kind(&self) -> ProblemKind {
        ProblemKind::Quadratic
    }

    fn dim(&self) -> usize {
        self.target.len()
    }

    fn target(&self) -> &[f64] {
        &self.target
    }

    fn init_iterate(&self) -> ParamVec {
        self.init.clone()
    }

    fn curvature(&self) -> Option<(f64, f64)> {
        Some((self.mu, self.mu))
    }

    fn exact_objective(&self) -> bool {
        true
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        0.5 * self.mu * linalg::dist_sq(theta, &self.target)
    }

    fn noise_offset(&self, _sigma_t: f64) -> f64 {
        // noise enters the gradient linearly, so the risk picks up no constant
        0.0
    }

    fn mean_gradient(&self, theta: &[f64]) -> Result<ParamVec> {
        self.check_dim(theta)?;
        Ok(theta
            .iter()
            .zip(&self.target)
            .map(|(t, s)| self.mu * (t - s))
            .collect())
    }

    fn evaluate_metric(&self, theta: &[f64]) -> f64 {
        linalg::dist_sq(theta, &self.target)
    }

    fn sample_gradient(
        &self,
        theta: &[f64],
        sigma_t: f64,
        batch: usize,
        rng: &mut RunRng,
    ) -> Result<GradientSample> {
        let mean = self.mean_gradient(theta)?;
        self.check_sigma(sigma_t)?;
        let scale = sigma_t / (self.dim() as f64 * batch as f64).sqrt();
        let grad: ParamVec = mean
            .iter()
            .map(|m| m + scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(GradientSample::from_parts(grad, mean))
    }

    fn has_analytic_second_moment(&self) -> bool {
        true
    }

    fn second_moment(
        &self,
        theta: &[f64],
        sigma_t: f64,
        batch: usize,
        _mc_rng: &mut RunRng,
    ) -> Result<ParamVec> {
        let mean = self.mean_gradient(theta)?;
        self.check_sigma(sigma_t)?;
        let var = sigma_t * sigma_t / (self.dim() as f64 * batch as f64);
        Ok(mean.iter().map(|m| m * m + var).collect())
    }

    fn drift(&mut self, delta_t: f64, rng: &mut RunRng) -> Result<()> {
        advance_target(&mut self.target, delta_t, &DriftMode::FullSpace, rng)
    }
}
