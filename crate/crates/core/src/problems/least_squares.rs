//! Strongly convex least squares:
//! F_t(theta) = 1/2 ||A (theta - theta*_t)||^2 with the spectrum of A^T A
//! logarithmically spaced on [1, 10]. Observations are y = A theta*_t + eps
//! with eps scaled by sigma_t / sqrt(n L); each batch element is one fresh
//! observation vector.

use super::{GradientSample, Problem, ProblemKind, ProblemSpec};
use crate::error::Result;
use crate::linalg::{self, Mat};
use crate::rng::RunRng;
use crate::sched::{advance_target, DriftMode};
use crate::ParamVec;
use rand::Rng;
use rand_distr::StandardNormal;

const MU: f64 = 1.0;
const L: f64 = 10.0;

pub struct LeastSquares {
    /// n x d design with A = Q diag(sqrt(lambda)), Q from a seeded QR.
    a: Mat,
    /// Diagonal of A^T A (the prescribed eigenvalues, up to rounding).
    ata_diag: ParamVec,
    target: ParamVec,
    init: ParamVec,
    n: usize,
}

impl LeastSquares {
    pub fn new(spec: &ProblemSpec, rng: &mut RunRng) -> Self {
        let (n, d) = (spec.n, spec.d);
        assert!(n >= d, "least squares needs n >= d");
        let mut q = Mat::gaussian(rng, n, d);
        q.orthonormalize_columns();
        // scale column j by sqrt(lambda_j), lambda log-spaced on [MU, L]
        let mut a = q;
        let mut ata_diag = vec![0.0; d];
        for j in 0..d {
            let frac = if d > 1 { j as f64 / (d - 1) as f64 } else { 0.0 };
            let lambda = MU * (L / MU).powf(frac);
            let s = lambda.sqrt();
            for i in 0..n {
                *a.at_mut(i, j) *= s;
            }
            ata_diag[j] = a.col_norm_sq(j);
        }
        let target = vec![0.0; d];
        let mut offset = linalg::gaussian_vec(rng, d);
        let nrm = linalg::norm(&offset);
        linalg::scale(&mut offset, spec.init_dist / nrm);
        LeastSquares {
            a,
            ata_diag,
            target,
            init: offset,
            n,
        }
    }

    fn residual_matvec(&self, theta: &[f64]) -> ParamVec {
        let diff = linalg::sub(theta, &self.target);
        self.a.matvec(&diff)
    }

    fn noise_scale(&self, sigma_t: f64) -> f64 {
        sigma_t / (self.n as f64 * L).sqrt()
    }
}

impl Problem for LeastSquares {
    fn kind(&self) -> ProblemKind {
        ProblemKind::LeastSquares
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
        Some((MU, L))
    }

    fn exact_objective(&self) -> bool {
        true
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        0.5 * linalg::norm_sq(&self.residual_matvec(theta))
    }

    fn noise_offset(&self, sigma_t: f64) -> f64 {
        // E 1/2 ||eps||^2 with n coordinates of variance sigma^2/(nL)
        0.5 * sigma_t * sigma_t / L
    }

    fn mean_gradient(&self, theta: &[f64]) -> Result<ParamVec> {
        self.check_dim(theta)?;
        Ok(self.a.t_matvec(&self.residual_matvec(theta)))
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
        // grad = A^T (A theta - y) = mean - A^T eps_bar
        let scale = self.noise_scale(sigma_t) / batch as f64;
        let mut eps_sum = vec![0.0; self.n];
        for _ in 0..batch {
            for e in eps_sum.iter_mut() {
                *e += rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut grad = mean.clone();
        let at_eps = self.a.t_matvec(&eps_sum);
        linalg::axpy(&mut grad, -scale, &at_eps);
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
        // Var (A^T eps_bar)_j = sigma^2/(nL b) * (A^T A)_jj
        let c = self.noise_scale(sigma_t).powi(2) / batch as f64;
        Ok(mean
            .iter()
            .zip(&self.ata_diag)
            .map(|(m, col)| m * m + c * col)
            .collect())
    }

    fn drift(&mut self, delta_t: f64, rng: &mut RunRng) -> Result<()> {
        advance_target(&mut self.target, delta_t, &DriftMode::FullSpace, rng)
    }
}
