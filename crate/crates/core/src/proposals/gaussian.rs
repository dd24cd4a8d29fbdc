use rand::Rng;

use super::{ParamVector, DELTA_PD};
use crate::error::{check_len, Error, Result};
use crate::linalg::{self, CholGaussian};
use crate::targets::Points;

/// Mean and lower Cholesky factor (row-major) of a Gaussian proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianProposalParams {
    mean: Vec<f64>,
    chol_factor: Vec<f64>,
}

impl GaussianProposalParams {
    pub fn new(mean: Vec<f64>, chol_factor: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        check_len(d * d, chol_factor.len())?;
        for i in 0..d {
            if chol_factor[i * d + i] < DELTA_PD {
                return Err(Error::Domain(format!(
                    "Cholesky diagonal {} below {DELTA_PD}",
                    chol_factor[i * d + i]
                )));
            }
            if chol_factor[i * d + i + 1..(i + 1) * d]
                .iter()
                .any(|v| *v != 0.0)
            {
                return Err(Error::Domain(
                    "Cholesky factor is not lower triangular".into(),
                ));
            }
        }
        if mean.iter().chain(&chol_factor).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Gaussian proposal parameters"));
        }
        Ok(Self { mean, chol_factor })
    }

    pub fn from_covariance(mean: Vec<f64>, covariance: &[f64]) -> Result<Self> {
        let chol = linalg::cholesky(covariance, mean.len())?;
        Self::new(mean, chol)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn chol_factor(&self) -> &[f64] {
        &self.chol_factor
    }

    /// `Σ = L Lᵀ`, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        linalg::outer_lower(&self.chol_factor, self.dim())
    }

    pub(crate) fn pack(&self) -> Result<ParamVector> {
        let d = self.dim();
        let mut v = self.mean.clone();
        for i in 0..d {
            for j in 0..i {
                v.push(self.chol_factor[i * d + j]);
            }
        }
        for i in 0..d {
            v.push(self.chol_factor[i * d + i].ln());
        }
        ParamVector::new(v)
    }

    /// Inverse of [`pack`](Self::pack); also reports whether a diagonal entry
    /// was clamped to the floor.
    pub(crate) fn unpack(d: usize, theta: &[f64]) -> Result<(Self, bool)> {
        let mean = theta[..d].to_vec();
        let mut chol = vec![0.0; d * d];
        let mut idx = d;
        for i in 0..d {
            for j in 0..i {
                chol[i * d + j] = theta[idx];
                idx += 1;
            }
        }
        let mut floor_hit = false;
        for i in 0..d {
            let diag = theta[idx].exp();
            idx += 1;
            if !diag.is_finite() {
                return Err(Error::NonFinite("Cholesky diagonal"));
            }
            chol[i * d + i] = if diag < DELTA_PD {
                floor_hit = true;
                DELTA_PD
            } else {
                diag
            };
        }
        Ok((Self::new(mean, chol)?, floor_hit))
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    gauss: CholGaussian,
    floor_hit: bool,
    mean_only: bool,
}

impl Prepared {
    pub(super) fn new(params: GaussianProposalParams, floor_hit: bool, mean_only: bool) -> Self {
        Self {
            gauss: CholGaussian::new(params.mean, params.chol_factor),
            floor_hit,
            mean_only,
        }
    }

    pub fn dim(&self) -> usize {
        self.gauss.dim()
    }

    pub fn param_len(&self) -> usize {
        let d = self.dim();
        if self.mean_only {
            d
        } else {
            d + d * (d + 1) / 2
        }
    }

    pub fn floor_hit(&self) -> bool {
        self.floor_hit
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Points {
        let d = self.dim();
        let mut pts = Points::with_capacity(d, n);
        let mut z = vec![0.0; d];
        let mut x = vec![0.0; d];
        for _ in 0..n {
            self.gauss.sample_into(rng, &mut z, &mut x);
            pts.push(&x);
        }
        pts
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.gauss.log_density(x)
    }

    /// With `u = L⁻¹(x − μ)` and `w = Σ⁻¹(x − μ) = L⁻ᵀu`:
    /// `∂/∂μ = w`, `∂/∂L_ij = w_i u_j` below the diagonal and
    /// `∂/∂ln L_ii = w_i u_i L_ii − 1`.
    pub fn score_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let l = &self.gauss.chol;
        let mut u = vec![0.0; d];
        self.gauss.whiten(x, &mut u);
        let mut w = u.clone();
        linalg::backward_solve_t(l, d, &mut w);
        out[..d].copy_from_slice(&w);
        if self.mean_only {
            return;
        }
        let mut idx = d;
        for i in 0..d {
            for j in 0..i {
                out[idx] = w[i] * u[j];
                idx += 1;
            }
        }
        for i in 0..d {
            out[idx] = w[i] * u[i] * l[i * d + i] - 1.0;
            idx += 1;
        }
    }
}
