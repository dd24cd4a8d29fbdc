use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::gamma::ln_gamma;

use super::{digamma, ParamVector};
use crate::error::{Error, Result};
use crate::targets::Points;

/// Beta shape parameters held on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaProposalParams {
    pub log_alpha: f64,
    pub log_beta: f64,
}

impl BetaProposalParams {
    pub fn from_shape(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "Beta shapes must be positive and finite, got ({alpha}, {beta})"
            )));
        }
        Ok(Self {
            log_alpha: alpha.ln(),
            log_beta: beta.ln(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    pub(crate) fn pack(&self) -> Result<ParamVector> {
        ParamVector::new(vec![self.log_alpha, self.log_beta])
    }

    pub(crate) fn unpack(theta: &[f64]) -> Result<Self> {
        let p = Self {
            log_alpha: theta[0],
            log_beta: theta[1],
        };
        if p.alpha() > 0.0 && p.beta() > 0.0 && p.alpha().is_finite() && p.beta().is_finite() {
            Ok(p)
        } else {
            Err(Error::NonFinite("Beta shape parameters"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    alpha: f64,
    beta: f64,
    ln_beta_fn: f64,
    psi_alpha: f64,
    psi_beta: f64,
    psi_sum: f64,
    dist: Beta<f64>,
}

impl Prepared {
    pub(super) fn new(p: BetaProposalParams) -> Result<Self> {
        let (a, b) = (p.alpha(), p.beta());
        let dist = Beta::new(a, b).map_err(|e| Error::Domain(format!("Beta({a}, {b}): {e}")))?;
        Ok(Self {
            alpha: a,
            beta: b,
            ln_beta_fn: ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b),
            psi_alpha: digamma(a)?,
            psi_beta: digamma(b)?,
            psi_sum: digamma(a + b)?,
            dist,
        })
    }

    /// Draws are kept strictly inside `(0, 1)`: an exact 0 or 1 from the
    /// underlying sampler is moved to the nearest interior float.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Points {
        let mut pts = Points::with_capacity(1, n);
        for _ in 0..n {
            let x: f64 = self.dist.sample(rng);
            let x = x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            pts.push(&[x]);
        }
        pts
    }

    pub fn log_density(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok((self.alpha - 1.0) * x.ln() + (self.beta - 1.0) * (-x).ln_1p() - self.ln_beta_fn)
    }

    /// `α (ln x − ψ(α) + ψ(α+β))` and `β (ln(1−x) − ψ(β) + ψ(α+β))`; the
    /// leading shape factor is the Jacobian of the log parameterization.
    pub fn score_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        check_unit(x)?;
        out[0] = self.alpha * (x.ln() - self.psi_alpha + self.psi_sum);
        out[1] = self.beta * ((-x).ln_1p() - self.psi_beta + self.psi_sum);
        Ok(())
    }
}

fn check_unit(x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("point {x} outside (0, 1)")))
    }
}
