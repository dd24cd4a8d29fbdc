//! Small dense helpers over row-major `d×d` slices. Dimensions here are tiny
//! (d ≤ a handful), so the per-sample paths avoid allocating matrices.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Lower Cholesky factor of a symmetric positive-definite matrix, row-major.
pub(crate) fn cholesky(cov: &[f64], d: usize) -> Result<Vec<f64>> {
    if cov.len() != d * d {
        return Err(Error::Shape {
            expected: d * d,
            got: cov.len(),
        });
    }
    for i in 0..d {
        for j in 0..i {
            let (a, b) = (cov[i * d + j], cov[j * d + i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::Domain(format!(
                    "covariance not symmetric at ({i},{j}): {a} vs {b}"
                )));
            }
        }
    }
    let m = DMatrix::from_row_slice(d, d, cov);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            out[i * d + j] = l[(i, j)];
        }
        if out[i * d + i] <= 0.0 {
            return Err(Error::Domain("non-positive Cholesky pivot".into()));
        }
    }
    Ok(out)
}

/// `L Lᵀ` for a row-major lower-triangular `L`.
pub(crate) fn outer_lower(l: &[f64], d: usize) -> Vec<f64> {
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..=i.min(j) {
                acc += l[i * d + k] * l[j * d + k];
            }
            s[i * d + j] = acc;
        }
    }
    s
}

/// Solves `L u = r` in place.
pub(crate) fn forward_solve(l: &[f64], d: usize, r: &mut [f64]) {
    for i in 0..d {
        let mut acc = r[i];
        for k in 0..i {
            acc -= l[i * d + k] * r[k];
        }
        r[i] = acc / l[i * d + i];
    }
}

/// Solves `Lᵀ w = u` in place.
pub(crate) fn backward_solve_t(l: &[f64], d: usize, u: &mut [f64]) {
    for i in (0..d).rev() {
        let mut acc = u[i];
        for k in i + 1..d {
            acc -= l[k * d + i] * u[k];
        }
        u[i] = acc / l[i * d + i];
    }
}

/// A multivariate normal held through its lower Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CholGaussian {
    pub mean: Vec<f64>,
    pub chol: Vec<f64>,
    /// `Σ ln L_ii`, i.e. `½ ln det Σ`.
    pub half_log_det: f64,
}

impl CholGaussian {
    pub fn new(mean: Vec<f64>, chol: Vec<f64>) -> Self {
        let d = mean.len();
        let half_log_det = (0..d).map(|i| chol[i * d + i].ln()).sum();
        Self {
            mean,
            chol,
            half_log_det,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Writes `u = L⁻¹ (x − μ)` into `u`.
    pub fn whiten(&self, x: &[f64], u: &mut [f64]) {
        for (ui, (xi, mi)) in u.iter_mut().zip(x.iter().zip(&self.mean)) {
            *ui = xi - mi;
        }
        forward_solve(&self.chol, self.dim(), u);
    }

    pub fn log_density_with(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.dim();
        self.whiten(x, scratch);
        let quad: f64 = scratch.iter().map(|v| v * v).sum();
        -0.5 * d as f64 * LN_2PI - self.half_log_det - 0.5 * quad
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dim()];
        self.log_density_with(x, &mut scratch)
    }

    /// `x = μ + L z` with `z` standard normal, written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        let d = self.dim();
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut acc = self.mean[i];
            for k in 0..=i {
                acc += self.chol[i * d + k] * z[k];
            }
            out[i] = acc;
        }
    }
}
