//! Low-rank matrix factorization: the model U V^T chases a rank-r target
//! M*_t = U* V*^T under uniformly sampled noisy entry observations.
//! Reconstruction MSE (1/mn) ||U V^T - M*||_F^2 is reported because the
//! factors themselves are not identifiable.

use super::{GradientSample, Problem, ProblemKind, ProblemSpec};
use crate::error::Result;
use crate::linalg;
use crate::rng::RunRng;
use crate::sched::{advance_target, DriftMode};
use crate::ParamVec;
use rand::Rng;
use rand_distr::StandardNormal;

pub struct MatrixFactorization {
    m: usize,
    n: usize,
    rank: usize,
    /// Stacked teacher factors [vec(U*); vec(V*)], row-major.
    target: ParamVec,
    /// Cached target matrix M* = U* V*^T, m x n row-major.
    m_star: ParamVec,
    /// Independent random starting factors at the teacher's scale.
    init: ParamVec,
}

impl MatrixFactorization {
    pub fn new(spec: &ProblemSpec, rng: &mut RunRng) -> Self {
        let (m, n, rank) = (spec.n, spec.n, spec.rank);
        // entry scale r^{-1/4} gives unit-variance entries of U* V*^T
        let scale = (rank as f64).powf(-0.25);
        let target: ParamVec = (0..(m + n) * rank)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let init: ParamVec = (0..(m + n) * rank)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut p = MatrixFactorization {
            m,
            n,
            rank,
            target,
            m_star: vec![0.0; m * n],
            init,
        };
        p.refresh_m_star();
        p
    }

    fn u_of<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[..self.m * self.rank]
    }

    fn v_of<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.m * self.rank..]
    }

    fn entry(&self, params: &[f64], i: usize, j: usize) -> f64 {
        let u = &self.u_of(params)[i * self.rank..(i + 1) * self.rank];
        let v = &self.v_of(params)[j * self.rank..(j + 1) * self.rank];
        linalg::dot(u, v)
    }

    fn refresh_m_star(&mut self) {
        let mut m_star = vec![0.0; self.m * self.n];
        for i in 0..self.m {
            for j in 0..self.n {
                m_star[i * self.n + j] = self.entry(&self.target, i, j);
            }
        }
        self.m_star = m_star;
    }
}

impl Problem for MatrixFactorization {
    fn kind(&self) -> ProblemKind {
        ProblemKind::MatrixFactorization
    }

    fn dim(&self) -> usize {
        (self.m + self.n) * self.rank
    }

    fn target(&self) -> &[f64] {
        &self.target
    }

    fn init_iterate(&self) -> ParamVec {
        self.init.clone()
    }

    fn curvature(&self) -> Option<(f64, f64)> {
        None
    }

    fn exact_objective(&self) -> bool {
        true
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        // optimization objective at sum scale; the reported reconstruction
        // MSE divides by mn
        0.5 * (self.m * self.n) as f64 * self.evaluate_metric(theta)
    }

    fn noise_offset(&self, sigma_t: f64) -> f64 {
        0.5 * (self.m * self.n) as f64 * sigma_t * sigma_t
    }

    fn mean_gradient(&self, theta: &[f64]) -> Result<ParamVec> {
        self.check_dim(theta)?;
        let mut grad = vec![0.0; self.dim()];
        let coeff = 1.0;
        let (u, v) = (self.u_of(theta), self.v_of(theta));
        let (gu, gv) = grad.split_at_mut(self.m * self.rank);
        for i in 0..self.m {
            for j in 0..self.n {
                let diff = coeff
                    * (linalg::dot(
                        &u[i * self.rank..(i + 1) * self.rank],
                        &v[j * self.rank..(j + 1) * self.rank],
                    ) - self.m_star[i * self.n + j]);
                for r in 0..self.rank {
                    gu[i * self.rank + r] += diff * v[j * self.rank + r];
                    gv[j * self.rank + r] += diff * u[i * self.rank + r];
                }
            }
        }
        Ok(grad)
    }

    fn evaluate_metric(&self, theta: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.m {
            for j in 0..self.n {
                let d = self.entry(theta, i, j) - self.m_star[i * self.n + j];
                acc += d * d;
            }
        }
        acc / (self.m * self.n) as f64
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
        // unbiased for the sum-scaled objective under uniform sampling
        let coeff = (self.m * self.n) as f64 / batch as f64;
        let (u, v) = (self.u_of(theta), self.v_of(theta));
        let (gu, gv) = grad.split_at_mut(self.m * self.rank);
        for _ in 0..batch {
            let i = rng.gen_range(0..self.m);
            let j = rng.gen_range(0..self.n);
            let y = self.m_star[i * self.n + j] + sigma_t * rng.sample::<f64, _>(StandardNormal);
            let resid = coeff
                * (linalg::dot(
                    &u[i * self.rank..(i + 1) * self.rank],
                    &v[j * self.rank..(j + 1) * self.rank],
                ) - y);
            for r in 0..self.rank {
                gu[i * self.rank + r] += resid * v[j * self.rank + r];
                gv[j * self.rank + r] += resid * u[i * self.rank + r];
            }
        }
        Ok(grad)
    }

    fn drift(&mut self, delta_t: f64, rng: &mut RunRng) -> Result<()> {
        advance_target(&mut self.target, delta_t, &DriftMode::FullSpace, rng)?;
        if delta_t != 0.0 {
            self.refresh_m_star();
        }
        Ok(())
    }
}
