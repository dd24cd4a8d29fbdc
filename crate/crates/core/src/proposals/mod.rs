//! Parametric proposal families `q_θ`.
//!
//! The optimizer walks an unconstrained [`ParamVector`]; each family maps it
//! to its constrained parameters:
//!
//! - Gaussian: `(mean, strictly-lower Cholesky entries, ln diag L)`, so every
//!   iterate is positive definite by construction. Diagonal entries are
//!   floored at [`DELTA_PD`].
//! - Gaussian with fixed covariance: the mean only.
//! - Beta: `(ln α, ln β)`.
//!
//! Scores are returned in these unconstrained coordinates.

mod beta;
mod digamma;
mod gaussian;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use beta::BetaProposalParams;
pub use digamma::digamma;
pub use gaussian::GaussianProposalParams;

use crate::error::{check_len, Error, Result};
use crate::targets::{Points, Support};

/// Floor on the Cholesky diagonal of Gaussian proposals.
pub const DELTA_PD: f64 = 1e-6;

/// Unconstrained parameter vector `θ`. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("parameter vector"))
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Constrained proposal parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalParams {
    Gaussian(GaussianProposalParams),
    Beta(BetaProposalParams),
}

/// A proposal family.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalFamily {
    /// Full-covariance Gaussian in `dim` dimensions.
    Gaussian { dim: usize },
    /// Gaussian with a fixed covariance (given by its Cholesky factor); only
    /// the mean is adapted.
    GaussianMean { dim: usize, chol: Vec<f64> },
    /// Beta distribution on `(0, 1)`.
    Beta,
}

impl ProposalFamily {
    pub fn gaussian(dim: usize) -> Self {
        Self::Gaussian { dim }
    }

    /// Mean-only Gaussian family with the given fixed covariance.
    pub fn gaussian_mean(covariance: &[f64]) -> Result<Self> {
        let dim = (covariance.len() as f64).sqrt() as usize;
        let chol = crate::linalg::cholesky(covariance, dim)?;
        Ok(Self::GaussianMean { dim, chol })
    }

    /// Dimension of the sample space.
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { dim } | Self::GaussianMean { dim, .. } => *dim,
            Self::Beta => 1,
        }
    }

    /// Length of the unconstrained parameter vector.
    pub fn param_len(&self) -> usize {
        match self {
            Self::Gaussian { dim } => dim + dim * (dim + 1) / 2,
            Self::GaussianMean { dim, .. } => *dim,
            Self::Beta => 2,
        }
    }

    pub fn support(&self) -> Support {
        match self {
            Self::Gaussian { .. } | Self::GaussianMean { .. } => Support::Real,
            Self::Beta => Support::UnitInterval,
        }
    }

    pub fn pack(&self, params: &ProposalParams) -> Result<ParamVector> {
        match (self, params) {
            (Self::Gaussian { dim }, ProposalParams::Gaussian(p)) => {
                check_len(*dim, p.dim())?;
                p.pack()
            }
            (Self::GaussianMean { dim, chol }, ProposalParams::Gaussian(p)) => {
                check_len(*dim, p.dim())?;
                if p.chol_factor() != chol.as_slice() {
                    return Err(Error::Config(
                        "covariance differs from the family's fixed covariance".into(),
                    ));
                }
                ParamVector::new(p.mean().to_vec())
            }
            (Self::Beta, ProposalParams::Beta(p)) => p.pack(),
            _ => Err(Error::Config(
                "parameters do not match proposal family".into(),
            )),
        }
    }

    pub fn unpack(&self, theta: &ParamVector) -> Result<ProposalParams> {
        check_len(self.param_len(), theta.len())?;
        match self {
            Self::Gaussian { dim } => Ok(ProposalParams::Gaussian(
                GaussianProposalParams::unpack(*dim, theta)?.0,
            )),
            Self::GaussianMean { chol, .. } => Ok(ProposalParams::Gaussian(
                GaussianProposalParams::new(theta.to_vec(), chol.clone())?,
            )),
            Self::Beta => Ok(ProposalParams::Beta(BetaProposalParams::unpack(theta)?)),
        }
    }

    /// Unpacks `theta` once and precomputes what sampling and evaluation need.
    pub fn prepare(&self, theta: &ParamVector) -> Result<PreparedProposal> {
        check_len(self.param_len(), theta.len())?;
        match self {
            Self::Gaussian { dim } => {
                let (params, floor_hit) = GaussianProposalParams::unpack(*dim, theta)?;
                Ok(PreparedProposal::Gaussian(gaussian::Prepared::new(
                    params, floor_hit, false,
                )))
            }
            Self::GaussianMean { chol, .. } => {
                let params = GaussianProposalParams::new(theta.to_vec(), chol.clone())?;
                Ok(PreparedProposal::Gaussian(gaussian::Prepared::new(
                    params, false, true,
                )))
            }
            Self::Beta => Ok(PreparedProposal::Beta(beta::Prepared::new(
                BetaProposalParams::unpack(theta)?,
            )?)),
        }
    }

    /// `n` i.i.d. draws from `q_θ`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        theta: &ParamVector,
        rng: &mut R,
        n: usize,
    ) -> Result<Points> {
        Ok(self.prepare(theta)?.sample(rng, n))
    }

    /// `ln q_θ(x)`.
    pub fn log_density(&self, theta: &ParamVector, x: &[f64]) -> Result<f64> {
        self.prepare(theta)?.log_density(x)
    }

    /// `∇_θ ln q_θ(x)` in unconstrained coordinates.
    pub fn score(&self, theta: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        let prepared = self.prepare(theta)?;
        let mut out = vec![0.0; self.param_len()];
        prepared.score_into(x, &mut out)?;
        Ok(out)
    }

    /// Column names for reported parameters: `mu_i`, `sigma_ij` (covariance
    /// entries, converted back from the Cholesky factor) or `alpha`, `beta`.
    pub fn param_columns(&self) -> Vec<String> {
        match self {
            Self::Gaussian { dim } | Self::GaussianMean { dim, .. } => {
                let mut cols: Vec<String> = (1..=*dim).map(|i| format!("mu_{i}")).collect();
                for i in 1..=*dim {
                    for j in 1..=*dim {
                        cols.push(format!("sigma_{i}{j}"));
                    }
                }
                cols
            }
            Self::Beta => vec!["alpha".into(), "beta".into()],
        }
    }

    /// Reported values matching [`param_columns`](Self::param_columns).
    pub fn reported_values(&self, theta: &ParamVector) -> Result<Vec<f64>> {
        Ok(match self.unpack(theta)? {
            ProposalParams::Gaussian(p) => {
                let mut v = p.mean().to_vec();
                v.extend(p.covariance());
                v
            }
            ProposalParams::Beta(p) => vec![p.alpha(), p.beta()],
        })
    }
}

/// A proposal with its parameters unpacked.
#[derive(Debug, Clone)]
pub enum PreparedProposal {
    Gaussian(gaussian::Prepared),
    Beta(beta::Prepared),
}

impl PreparedProposal {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::Beta(_) => 1,
        }
    }

    pub fn param_len(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.param_len(),
            Self::Beta(_) => 2,
        }
    }

    /// Whether unpacking clamped a Cholesky diagonal entry to [`DELTA_PD`].
    pub fn floor_hit(&self) -> bool {
        match self {
            Self::Gaussian(g) => g.floor_hit(),
            Self::Beta(_) => false,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Points {
        match self {
            Self::Gaussian(g) => g.sample(rng, n),
            Self::Beta(b) => b.sample(rng, n),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_len(self.dim(), x.len())?;
        match self {
            Self::Gaussian(g) => {
                if !Support::Real.contains(x) {
                    return Err(Error::Domain(format!("point {x:?} is not finite")));
                }
                Ok(g.log_density(x))
            }
            Self::Beta(b) => b.log_density(x[0]),
        }
    }

    pub fn score_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.dim(), x.len())?;
        check_len(self.param_len(), out.len())?;
        match self {
            Self::Gaussian(g) => {
                g.score_into(x, out);
                Ok(())
            }
            Self::Beta(b) => b.score_into(x[0], out),
        }
    }
}
