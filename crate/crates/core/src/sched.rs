//! Drift magnitude and noise level schedules plus the normalized
//! random-walk target update shared by all problems.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use rand::Rng;

/// Time profile of a scalar schedule: a constant, or `scale * ln(t + 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Constant,
    Log,
}

#[derive(Debug, Clone, Copy)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    /// Coefficient `a` in `a * ln(t + 2)`; ignored for constant schedules.
    pub scale: f64,
    /// Value of a constant schedule; ignored for log schedules.
    pub offset: f64,
}

impl ScheduleSpec {
    pub fn constant(offset: f64) -> Self {
        assert!(offset >= 0.0, "schedule values must be non-negative");
        ScheduleSpec {
            kind: ScheduleKind::Constant,
            scale: 0.0,
            offset,
        }
    }

    pub fn log(scale: f64) -> Self {
        assert!(scale >= 0.0, "schedule values must be non-negative");
        ScheduleSpec {
            kind: ScheduleKind::Log,
            scale,
            offset: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Schedule value at step `t`.
    pub fn value(&self, t: u64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.offset,
            ScheduleKind::Log => self.scale * ((t + 2) as f64).ln(),
        }
    }

    /// Largest value attained on steps `0..t_max` (schedules are
    /// non-decreasing, so this is the value at the last step).
    pub fn sup_on_horizon(&self, t_max: u64) -> f64 {
        self.value(t_max.saturating_sub(1))
    }
}

/// Where the drift direction lives.
#[derive(Debug, Clone)]
pub enum DriftMode {
    /// Direction drawn from a standard Gaussian on all of R^d.
    FullSpace,
    /// Direction drawn inside the column span of an orthonormal basis (d x r).
    Subspace(Mat),
    /// Direction supported on a fixed index set.
    Support(Vec<usize>),
    /// Magnitude-only; the drift itself is applied by the owning problem
    /// (teacher-network perturbations need model predictions).
    FunctionSpace,
}

#[derive(Debug, Clone)]
pub struct DriftSpec {
    pub magnitude: ScheduleSpec,
    pub mode: DriftMode,
}

/// Draw a standard Gaussian, redrawing on the (measure-zero) exact zero
/// vector so normalization never divides by zero.
fn nonzero_gaussian<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let u = linalg::gaussian_vec(rng, d);
        if linalg::norm(&u) > 0.0 {
            return u;
        }
    }
}

/// Move `target` by exactly `delta` along a random direction drawn per
/// `mode`. `delta = 0` leaves the target untouched. Coordinates outside a
/// support set are never modified.
pub fn advance_target<R: Rng>(
    target: &mut [f64],
    delta: f64,
    mode: &DriftMode,
    rng: &mut R,
) -> Result<()> {
    assert!(delta >= 0.0, "drift magnitude must be non-negative");
    if delta == 0.0 {
        return Ok(());
    }
    match mode {
        DriftMode::FullSpace => {
            let mut u = nonzero_gaussian(rng, target.len());
            let n = linalg::norm(&u);
            linalg::scale(&mut u, delta / n);
            linalg::axpy(target, 1.0, &u);
        }
        DriftMode::Subspace(basis) => {
            if basis.rows != target.len() {
                return Err(Error::DimensionMismatch {
                    expected: target.len(),
                    got: basis.rows,
                });
            }
            let mut z = nonzero_gaussian(rng, basis.cols);
            let n = linalg::norm(&z);
            linalg::scale(&mut z, delta / n);
            let step = basis.matvec(&z);
            linalg::axpy(target, 1.0, &step);
        }
        DriftMode::Support(indices) => {
            let mut z = nonzero_gaussian(rng, indices.len());
            let n = linalg::norm(&z);
            linalg::scale(&mut z, delta / n);
            for (slot, idx) in z.iter().zip(indices) {
                target[*idx] += slot;
            }
        }
        DriftMode::FunctionSpace => {
            panic!("function-space drift is applied by the owning problem")
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn zero_schedule_is_zero() {
        let s = ScheduleSpec::constant(0.0);
        assert_eq!(s.value(57), 0.0);
    }

    #[test]
    fn log_schedule_at_zero_is_ln2() {
        let s = ScheduleSpec::log(1.0);
        assert!((s.value(0) - 2.0_f64.ln()).abs() < 1e-15);
        assert!((s.value(0) - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn low_drift_least_squares_schedule_value() {
        // Table row: Delta_t = 5e-4 * log(t + 2) at t = 798.
        let s = ScheduleSpec::log(5e-4);
        assert!((s.value(798) - 5e-4 * 800.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_schedule_is_nondecreasing_and_nonnegative() {
        let s = ScheduleSpec::log(0.3);
        let mut prev = -1.0;
        for t in 0..2000 {
            let v = s.value(t);
            assert!(v >= 0.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn zero_delta_leaves_target_unchanged() {
        let mut rng = stream(0, "drift");
        let mut target = vec![1.0, -2.0, 3.0];
        advance_target(&mut target, 0.0, &DriftMode::FullSpace, &mut rng).unwrap();
        assert_eq!(target, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn full_space_step_has_exact_norm() {
        let mut rng = stream(1, "drift");
        let mut target = vec![0.5, 0.5, -0.25];
        let before = target.clone();
        advance_target(&mut target, 1.0, &DriftMode::FullSpace, &mut rng).unwrap();
        let step: f64 = linalg::dist_sq(&target, &before).sqrt();
        assert!((step - 1.0).abs() < 1e-12, "step norm {step}");
    }

    #[test]
    fn support_drift_touches_only_support() {
        let mut rng = stream(2, "drift");
        let mut target = vec![0.0; 10];
        let before = target.clone();
        let mode = DriftMode::Support(vec![1, 4]);
        advance_target(&mut target, 0.5, &mode, &mut rng).unwrap();
        for i in 0..10 {
            if i != 1 && i != 4 {
                assert_eq!(target[i], before[i], "coordinate {i} moved");
            }
        }
        let step = linalg::dist_sq(&target, &before).sqrt();
        assert!((step - 0.5).abs() < 1e-12);
    }

    #[test]
    fn subspace_drift_stays_in_span() {
        let mut init = stream(3, "init");
        let mut basis = Mat::gaussian(&mut init, 8, 3);
        basis.orthonormalize_columns();
        let mut target = vec![0.0; 8];
        let before = target.clone();
        let mode = DriftMode::Subspace(basis.clone());
        let mut rng = stream(3, "drift");
        advance_target(&mut target, 0.1, &mode, &mut rng).unwrap();
        let step = linalg::sub(&target, &before);
        // Component orthogonal to span(U) must vanish: step - U U^T step = 0.
        let coeffs = basis.t_matvec(&step);
        let back = basis.matvec(&coeffs);
        assert!(linalg::dist_sq(&step, &back).sqrt() < 1e-12);
        assert!((linalg::norm(&step) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = |seed: u64| {
            let mut rng = stream(seed, "drift");
            let mut target = vec![0.0; 5];
            for t in 0..50 {
                let d = ScheduleSpec::log(0.2).value(t);
                advance_target(&mut target, d, &DriftMode::FullSpace, &mut rng).unwrap();
            }
            target
        };
        let a = run(9);
        let b = run(9);
        assert_eq!(a, b, "same seed must give bit-identical trajectories");
        assert_ne!(a, run(10));
    }

    proptest::proptest! {
        #[test]
        fn drift_norm_matches_delta(delta in 1e-6f64..10.0, seed in 0u64..500) {
            let mut rng = stream(seed, "drift");
            let mut target = vec![0.25; 12];
            let before = target.clone();
            advance_target(&mut target, delta, &DriftMode::FullSpace, &mut rng).unwrap();
            let step = linalg::dist_sq(&target, &before).sqrt();
            proptest::prop_assert!((step - delta).abs() <= 1e-10 * delta.max(1.0));
        }
    }
}
