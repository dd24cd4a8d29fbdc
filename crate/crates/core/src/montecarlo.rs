//! Importance weights, the self-normalized estimator and the moment
//! estimators that drive adaptation.
//!
//! Weight arithmetic happens in log space. `W² ` is formed as
//! `exp(2 ln W)`; a log-weight above [`LOG_WEIGHT_OVERFLOW`] flags the batch.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::proposals::{ParamVector, PreparedProposal, ProposalFamily};
use crate::targets::{ExperimentTarget, Points, Target};

/// Log-weights above this are treated as overflow.
pub const LOG_WEIGHT_OVERFLOW: f64 = 300.0;

type PhiFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A bounded test function `φ` with its sup-norm.
#[derive(Clone)]
pub struct TestFunction {
    eval: PhiFn,
    sup_norm: f64,
    rect: Option<(Vec<f64>, Vec<f64>)>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("sup_norm", &self.sup_norm)
            .field("rect", &self.rect)
            .finish()
    }
}

impl TestFunction {
    pub fn new<F>(sup_norm: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(sup_norm > 0.0 && sup_norm.is_finite()) {
            return Err(Error::Config(format!(
                "sup norm must be positive, got {sup_norm}"
            )));
        }
        Ok(Self {
            eval: Arc::new(f),
            sup_norm,
            rect: None,
        })
    }

    /// Indicator of the closed box `[lower, upper]`.
    pub fn indicator(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len(lower.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::Config(format!(
                "indicator box needs lower < upper, got {lower:?} / {upper:?}"
            )));
        }
        let (lo, hi) = (lower.clone(), upper.clone());
        let mut phi = Self::new(1.0, move |x: &[f64]| {
            let inside = x
                .iter()
                .zip(lo.iter().zip(&hi))
                .all(|(v, (a, b))| v >= a && v <= b);
            if inside {
                1.0
            } else {
                0.0
            }
        })?;
        phi.rect = Some((lower, upper));
        Ok(phi)
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// The box, for indicator test functions.
    pub fn rect(&self) -> Option<(&[f64], &[f64])> {
        self.rect
            .as_ref()
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
    }

    /// `φ(x)`, checked against the declared sup-norm.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = (self.eval)(x);
        if v.abs() <= self.sup_norm {
            Ok(v)
        } else {
            Err(Error::Domain(format!(
                "test function value {v} exceeds its sup norm {}",
                self.sup_norm
            )))
        }
    }
}

/// Indicator of the experiment's region `D`, with sup-norm 1.
pub fn experiment_test_function(which: ExperimentTarget) -> TestFunction {
    let (lo, hi) = which.region();
    TestFunction::indicator(lo, hi).expect("experiment regions are valid boxes")
}

/// `ln W(x_i) = ln Π(x_i) − ln q(x_i)` for every point.
pub fn importance_log_weights(
    target: &Target,
    proposal: &PreparedProposal,
    points: &Points,
) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|x| Ok(target.log_unnorm_density(x)? - proposal.log_density(x)?))
        .collect()
}

/// `W(x_i) = Π(x_i) / q_θ(x_i)`. A log-weight beyond the overflow threshold
/// (or NaN) is an error.
pub fn importance_weights(
    target: &Target,
    family: &ProposalFamily,
    params: &ParamVector,
    points: &Points,
) -> Result<Vec<f64>> {
    let proposal = family.prepare(params)?;
    importance_log_weights(target, &proposal, points)?
        .into_iter()
        .map(|lw| {
            if lw > LOG_WEIGHT_OVERFLOW || lw.is_nan() {
                Err(Error::WeightOverflow(lw))
            } else {
                Ok(lw.exp())
            }
        })
        .collect()
}

/// One iteration's particles with their weights and test-function values.
#[derive(Debug, Clone)]
pub struct WeightedBatch {
    log_weights: Vec<f64>,
    unnorm_weights: Vec<f64>,
    norm_weights: Vec<f64>,
    phi_values: Vec<f64>,
    sup_norm: f64,
    overflow: bool,
}

impl WeightedBatch {
    /// Weighs `points` (drawn from `proposal`) against `target`.
    pub fn new(
        target: &Target,
        proposal: &PreparedProposal,
        points: &Points,
        phi: &TestFunction,
    ) -> Result<Self> {
        let log_weights = importance_log_weights(target, proposal, points)?;
        let phi_values = points
            .iter()
            .map(|x| phi.eval(x))
            .collect::<Result<Vec<_>>>()?;
        Self::from_log_weights(log_weights, phi_values, phi.sup_norm())
    }

    /// Builds a batch from raw nonnegative weights and `φ` values.
    pub fn from_weights(unnorm_weights: &[f64], phi_values: Vec<f64>) -> Result<Self> {
        if unnorm_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sup = phi_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let logs = unnorm_weights.iter().map(|w| w.ln()).collect();
        Self::from_log_weights(logs, phi_values, sup.max(f64::MIN_POSITIVE))
    }

    fn from_log_weights(
        log_weights: Vec<f64>,
        phi_values: Vec<f64>,
        sup_norm: f64,
    ) -> Result<Self> {
        check_len(log_weights.len(), phi_values.len())?;
        if log_weights.iter().any(|lw| lw.is_nan()) {
            return Err(Error::NonFinite("log weights"));
        }
        let max = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateBatch);
        }
        let overflow = max > LOG_WEIGHT_OVERFLOW;
        let shifted: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
        let total: f64 = shifted.iter().sum();
        let norm_weights = shifted.iter().map(|e| e / total).collect();
        let unnorm_weights = log_weights.iter().map(|lw| lw.exp()).collect();
        Ok(Self {
            log_weights,
            unnorm_weights,
            norm_weights,
            phi_values,
            sup_norm,
            overflow,
        })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn unnorm_weights(&self) -> &[f64] {
        &self.unnorm_weights
    }

    pub fn norm_weights(&self) -> &[f64] {
        &self.norm_weights
    }

    pub fn phi_values(&self) -> &[f64] {
        &self.phi_values
    }

    /// Whether some log-weight exceeded [`LOG_WEIGHT_OVERFLOW`].
    pub fn overflow(&self) -> bool {
        self.overflow
    }

    /// `(φ, π_θ^N) = Σ_i w_i φ(x_i)` with normalized weights.
    pub fn snis_estimate(&self) -> f64 {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (lw, phi) in self.log_weights.iter().zip(&self.phi_values) {
            let e = (lw - max).exp();
            num += e * phi;
            den += e;
        }
        (num / den).clamp(-self.sup_norm, self.sup_norm)
    }

    /// `R̂ = (1/N) Σ W_i²`, `+∞` when the batch overflowed.
    pub fn r_hat(&self) -> f64 {
        if self.overflow {
            return f64::INFINITY;
        }
        self.log_weights
            .iter()
            .map(|lw| (2.0 * lw).exp())
            .sum::<f64>()
            / self.len() as f64
    }

    /// Squared weights `exp(2 ln W_i)`.
    pub fn squared_weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| (2.0 * lw).exp()).collect()
    }
}

/// SNIS estimate of a batch.
pub fn snis_estimate(batch: &WeightedBatch) -> f64 {
    batch.snis_estimate()
}

/// Unbiased estimate of `R(θ) = E_q[W²]`: `(1/N) Σ W_i²`.
pub fn estimate_r(unnorm_weights: &[f64]) -> f64 {
    unnorm_weights.iter().map(|w| w * w).sum::<f64>() / unnorm_weights.len() as f64
}

/// Score-function estimate of `∇R(θ)`: `−(1/N) Σ W_i² ∇_θ ln q_θ(x_i)`.
///
/// `scores` yields one length-`p` score per weight.
pub fn estimate_grad_r<S, I>(unnorm_weights: &[f64], scores: I, p: usize) -> Vec<f64>
where
    S: AsRef<[f64]>,
    I: IntoIterator<Item = S>,
{
    let squared: Vec<f64> = unnorm_weights.iter().map(|w| w * w).collect();
    grad_from_squared(&squared, scores, p)
}

pub(crate) fn grad_from_squared<S, I>(squared_weights: &[f64], scores: I, p: usize) -> Vec<f64>
where
    S: AsRef<[f64]>,
    I: IntoIterator<Item = S>,
{
    let mut g = vec![0.0; p];
    let mut n = 0usize;
    for (w2, s) in squared_weights.iter().zip(scores) {
        let s = s.as_ref();
        debug_assert_eq!(s.len(), p);
        if *w2 != 0.0 {
            for (gj, sj) in g.iter_mut().zip(s) {
                *gj -= w2 * sj;
            }
        }
        n += 1;
    }
    if n > 0 {
        for gj in g.iter_mut() {
            *gj /= n as f64;
        }
    }
    g
}

/// Scores of every point in a batch, flattened row-major (`N × p`).
pub fn batch_scores(proposal: &PreparedProposal, points: &Points) -> Result<Vec<f64>> {
    let p = proposal.param_len();
    let mut out = vec![0.0; points.len() * p];
    for (x, s) in points.iter().zip(out.chunks_exact_mut(p)) {
        proposal.score_into(x, s)?;
    }
    Ok(out)
}
