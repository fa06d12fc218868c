//! Rank-deficient logistic regression with symmetric label-flip noise.
//! Covariates A = Z U^T live in an r-dimensional subspace, the target
//! drifts inside that subspace, and the per-step noise level is the flip
//! probability pi_t in [0, 1/2). Labels are Bernoulli with corrupted
//! probabilities p~ = (1 - 2 pi) sigmoid(A theta*) + pi, and the reported
//! metric is the squared norm of the population gradient.

use super::{GradientSample, Problem, ProblemKind, ProblemSpec};
use crate::error::Result;
use crate::linalg::{self, Mat};
use crate::rng::RunRng;
use crate::sched::{advance_target, DriftMode};
use crate::ParamVec;
use rand::Rng;

const MAX_FLIP_PROB: f64 = 0.499;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub struct LogisticLabelFlip {
    a: Mat,
    basis: Mat,
    target: ParamVec,
    /// Clean teacher probabilities sigmoid(A theta*), refreshed on drift.
    clean_probs: ParamVec,
    /// Corrupted probabilities under the current flip level.
    corrupted: ParamVec,
    flip_prob: f64,
}

impl LogisticLabelFlip {
    pub fn new(spec: &ProblemSpec, rng: &mut RunRng) -> Self {
        let (d, r, n) = (spec.d, spec.rank, spec.n);
        assert!(r <= d);
        let mut basis = Mat::gaussian(rng, d, r);
        basis.orthonormalize_columns();
        let scale = 1.0 / (r as f64).sqrt();
        let mut z = Mat::gaussian(rng, n, r);
        linalg::scale(&mut z.data, scale);
        // A = Z U^T
        let mut a = Mat::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..r {
                    acc += z.at(i, k) * basis.at(j, k);
                }
                *a.at_mut(i, j) = acc;
            }
        }
        // initial target: unit-norm vector inside the subspace
        let mut coeffs = linalg::gaussian_vec(rng, r);
        let nrm = linalg::norm(&coeffs);
        linalg::scale(&mut coeffs, 1.0 / nrm);
        let target = basis.matvec(&coeffs);
        let mut p = LogisticLabelFlip {
            a,
            basis,
            target,
            clean_probs: vec![0.0; n],
            corrupted: vec![0.0; n],
            flip_prob: 0.0,
        };
        p.refresh_probs();
        p
    }

    fn refresh_probs(&mut self) {
        let logits = self.a.matvec(&self.target);
        for (c, z) in self.clean_probs.iter_mut().zip(&logits) {
            *c = sigmoid(*z);
        }
        self.refresh_corrupted();
    }

    fn refresh_corrupted(&mut self) {
        let pi = self.flip_prob;
        for (c, p) in self.corrupted.iter_mut().zip(&self.clean_probs) {
            *c = (1.0 - 2.0 * pi) * p + pi;
        }
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }
}

impl Problem for LogisticLabelFlip {
    fn kind(&self) -> ProblemKind {
        ProblemKind::LogisticLabelFlip
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
        let n = self.a.rows;
        let logits = self.a.matvec(theta);
        let mut acc = 0.0;
        for i in 0..n {
            acc += softplus(logits[i]) - self.corrupted[i] * logits[i];
        }
        acc / n as f64
    }

    fn noise_offset(&self, _sigma_t: f64) -> f64 {
        // the corrupted-label risk is the objective itself
        0.0
    }

    fn mean_gradient(&self, theta: &[f64]) -> Result<ParamVec> {
        self.check_dim(theta)?;
        let n = self.a.rows;
        let logits = self.a.matvec(theta);
        let resid: ParamVec = (0..n)
            .map(|i| sigmoid(logits[i]) - self.corrupted[i])
            .collect();
        let mut g = self.a.t_matvec(&resid);
        linalg::scale(&mut g, 1.0 / n as f64);
        Ok(g)
    }

    fn evaluate_metric(&self, theta: &[f64]) -> f64 {
        let g = self.mean_gradient(theta).expect("dimension checked");
        linalg::norm_sq(&g)
    }

    fn set_noise_level(&mut self, sigma_t: f64) {
        self.flip_prob = sigma_t.clamp(0.0, MAX_FLIP_PROB);
        self.refresh_corrupted();
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
        debug_assert!(
            (sigma_t.clamp(0.0, MAX_FLIP_PROB) - self.flip_prob).abs() < 1e-12,
            "flip level out of sync with set_noise_level"
        );
        let mut grad = vec![0.0; self.dim()];
        let coeff = 1.0 / batch as f64;
        for _ in 0..batch {
            let i = rng.gen_range(0..self.a.rows);
            let row = self.a.row(i);
            let label = if rng.gen_bool(self.corrupted[i]) { 1.0 } else { 0.0 };
            let resid = sigmoid(linalg::dot(row, theta)) - label;
            linalg::axpy(&mut grad, coeff * resid, row);
        }
        Ok(grad)
    }

    fn drift(&mut self, delta_t: f64, rng: &mut RunRng) -> Result<()> {
        let mode = DriftMode::Subspace(self.basis.clone());
        advance_target(&mut self.target, delta_t, &mode, rng)?;
        if delta_t != 0.0 {
            self.refresh_probs();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn make() -> LogisticLabelFlip {
        let spec = ProblemSpec {
            d: 10,
            rank: 3,
            n: 50,
            ..ProblemSpec::defaults(ProblemKind::LogisticLabelFlip)
        };
        LogisticLabelFlip::new(&spec, &mut stream(9, "init"))
    }

    #[test]
    fn corrupted_probabilities_stay_in_band() {
        let mut p = make();
        p.set_noise_level(0.35);
        for c in &p.corrupted {
            assert!(*c >= 0.35 && *c <= 0.65, "corrupted prob {c} outside band");
        }
    }

    #[test]
    fn target_stays_in_subspace_under_drift() {
        let mut p = make();
        let mut rng = stream(10, "drift");
        for _ in 0..5 {
            p.drift(0.1, &mut rng).unwrap();
        }
        // component orthogonal to the basis must vanish
        let coeffs = p.basis.t_matvec(&p.target);
        let back = p.basis.matvec(&coeffs);
        assert!(linalg::dist_sq(&p.target, &back).sqrt() < 1e-10);
    }

    #[test]
    fn gradient_is_zero_at_clean_optimum_without_flips() {
        // with pi = 0 the population gradient vanishes at theta*
        let mut p = make();
        p.set_noise_level(0.0);
        let g = p.mean_gradient(&p.target().to_vec()).unwrap();
        assert!(linalg::norm(&g) < 1e-12);
        assert!(p.evaluate_metric(p.target()) < 1e-24);
    }

    #[test]
    fn metric_is_squared_gradient_norm() {
        let mut p = make();
        p.set_noise_level(0.2);
        let theta = vec![0.05; 10];
        let g = p.mean_gradient(&theta).unwrap();
        assert!((p.evaluate_metric(&theta) - linalg::norm_sq(&g)).abs() < 1e-15);
    }
}
