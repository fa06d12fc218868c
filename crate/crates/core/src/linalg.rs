//! Small dense vector/matrix helpers. Everything is row-major `Vec<f64>`.

use rand::Rng;
use rand_distr::StandardNormal;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // independent accumulators break the sequential-add dependency chain;
    // chunks_exact lets the compiler drop bounds checks and vectorize
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    let mut acc = [0.0f64; 8];
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += xa[k] * xb[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    let partial = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    partial + tail
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `y += c * x`
pub fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn scale(a: &mut [f64], c: f64) {
    for x in a.iter_mut() {
        *x *= c;
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Rescale `g` in place so that its l2 norm is at most `max_norm`.
///
/// Guarantees `norm(g) <= max_norm` after the call even in the face of
/// floating-point rounding of the rescale factor.
pub fn clip_norm(g: &mut [f64], max_norm: f64) -> bool {
    let n = norm(g);
    if n <= max_norm || n == 0.0 {
        return false;
    }
    if !n.is_finite() {
        // rescaling by inf/NaN would silently zero or poison the gradient;
        // leave it for the step's own finiteness checks
        return false;
    }
    scale(g, max_norm / n);
    while norm(g) > max_norm {
        scale(g, 1.0 - 4.0 * f64::EPSILON);
    }
    true
}

/// Standard Gaussian vector.
pub fn gaussian_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Dense row-major matrix.
#[derive(Debug, Clone)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: gaussian_vec(rng, rows * cols),
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `A^T x`
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            axpy(&mut out, x[i], self.row(i));
        }
        out
    }

    /// Squared l2 norm of column j.
    pub fn col_norm_sq(&self, j: usize) -> f64 {
        (0..self.rows).map(|i| self.at(i, j) * self.at(i, j)).sum()
    }

    /// Orthonormalize the columns in place (modified Gram-Schmidt).
    /// Requires rows >= cols and numerically independent columns.
    pub fn orthonormalize_columns(&mut self) {
        for j in 0..self.cols {
            for k in 0..j {
                let mut proj = 0.0;
                for i in 0..self.rows {
                    proj += self.at(i, j) * self.at(i, k);
                }
                for i in 0..self.rows {
                    *self.at_mut(i, j) -= proj * self.at(i, k);
                }
            }
            let nrm = self.col_norm_sq(j).sqrt();
            assert!(nrm > 1e-12, "rank-deficient matrix in orthonormalization");
            for i in 0..self.rows {
                *self.at_mut(i, j) /= nrm;
            }
        }
    }
}
