//! Unnormalized target densities `Π(x)`.
//!
//! Each target carries its dimension, its support and, when known, `ln Z`.
//! The built-in experiment targets are normalized densities, so `ln Z = 0`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, CholGaussian, LN_2PI};

/// A batch of points in `R^d`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape {
                expected: dim.max(1) * (data.len() / dim.max(1) + 1),
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(1);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_len(dim, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub(crate) fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * n),
        }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.data.extend_from_slice(x);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Where a density is defined.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// All of `R^d`.
    Real,
    /// The open interval `(0, 1)`; one-dimensional.
    UnitInterval,
    /// A closed axis-aligned box.
    Rect { lower: Vec<f64>, upper: Vec<f64> },
}

impl Support {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Support::Real => x.iter().all(|v| v.is_finite()),
            Support::UnitInterval => x.len() == 1 && x[0] > 0.0 && x[0] < 1.0,
            Support::Rect { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi),
        }
    }
}

/// Mean vector and covariance matrix of a multivariate normal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    mean: Vec<f64>,
    covariance: Vec<f64>,
    chol: Vec<f64>,
}

impl GaussianSpec {
    /// `covariance` is row-major `d×d` and must be symmetric positive-definite.
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Shape {
                expected: 1,
                got: 0,
            });
        }
        let chol = linalg::cholesky(&covariance, d)?;
        Ok(Self {
            mean,
            covariance,
            chol,
        })
    }

    /// Standard normal in `d` dimensions.
    pub fn standard(d: usize) -> Self {
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = 1.0;
        }
        Self::new(vec![0.0; d], cov).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// Lower Cholesky factor of the covariance, row-major.
    pub fn chol_factor(&self) -> &[f64] {
        &self.chol
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.as_chol().log_density(x)
    }

    pub(crate) fn as_chol(&self) -> CholGaussian {
        CholGaussian::new(self.mean.clone(), self.chol.clone())
    }
}

/// A finite Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    components: Vec<(f64, GaussianSpec)>,
}

impl MixtureSpec {
    pub fn new(components: Vec<(f64, GaussianSpec)>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Config("mixture needs at least one component".into()))?;
        let d = first.1.dim();
        let mut total = 0.0;
        for (w, g) in &components {
            if !(*w > 0.0 && *w <= 1.0) {
                return Err(Error::Config(format!("mixture weight {w} outside (0, 1]")));
            }
            check_len(d, g.dim())?;
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, GaussianSpec)] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }
}

type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Density {
    Gaussian(GaussianSpec, CholGaussian),
    Mixture(MixtureSpec, Vec<(f64, CholGaussian)>),
    LogitNormal { loc: f64, scale: f64 },
    Custom(LogDensityFn),
}

/// An unnormalized target density `Π` on a declared support.
#[derive(Clone)]
pub struct Target {
    density: Density,
    dim: usize,
    log_norm_const: Option<f64>,
    support: Support,
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.density {
            Density::Gaussian(..) => "gaussian",
            Density::Mixture(..) => "mixture",
            Density::LogitNormal { .. } => "logitnormal",
            Density::Custom(_) => "custom",
        };
        f.debug_struct("Target")
            .field("kind", &kind)
            .field("dim", &self.dim)
            .field("log_norm_const", &self.log_norm_const)
            .field("support", &self.support)
            .finish()
    }
}

impl Target {
    pub fn gaussian(spec: GaussianSpec) -> Self {
        let dim = spec.dim();
        let chol = spec.as_chol();
        Self {
            density: Density::Gaussian(spec, chol),
            dim,
            log_norm_const: Some(0.0),
            support: Support::Real,
        }
    }

    pub fn mixture(spec: MixtureSpec) -> Self {
        let dim = spec.dim();
        let comps = spec
            .components()
            .iter()
            .map(|(w, g)| (w.ln(), g.as_chol()))
            .collect();
        Self {
            density: Density::Mixture(spec, comps),
            dim,
            log_norm_const: Some(0.0),
            support: Support::Real,
        }
    }

    /// Law of `sigmoid(Z)` with `Z ~ N(loc, scale²)`.
    pub fn logit_normal(loc: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && loc.is_finite()) {
            return Err(Error::Config(format!(
                "logit-normal needs finite loc and positive scale, got ({loc}, {scale})"
            )));
        }
        Ok(Self {
            density: Density::LogitNormal { loc, scale },
            dim: 1,
            log_norm_const: Some(0.0),
            support: Support::UnitInterval,
        })
    }

    /// A user-supplied log-density. `log_norm_const` is `ln Z` when known.
    pub fn custom<F>(dim: usize, support: Support, log_norm_const: Option<f64>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            density: Density::Custom(Arc::new(f)),
            dim,
            log_norm_const,
            support,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn log_norm_const(&self) -> Option<f64> {
        self.log_norm_const
    }

    pub fn gaussian_spec(&self) -> Option<&GaussianSpec> {
        match &self.density {
            Density::Gaussian(spec, _) => Some(spec),
            _ => None,
        }
    }

    pub fn mixture_spec(&self) -> Option<&MixtureSpec> {
        match &self.density {
            Density::Mixture(spec, _) => Some(spec),
            _ => None,
        }
    }

    pub fn logit_normal_params(&self) -> Option<(f64, f64)> {
        match self.density {
            Density::LogitNormal { loc, scale } => Some((loc, scale)),
            _ => None,
        }
    }

    /// `ln Π(x)`. Points outside the support are a domain error.
    pub fn log_unnorm_density(&self, x: &[f64]) -> Result<f64> {
        check_len(self.dim, x.len())?;
        if !self.support.contains(x) {
            return Err(Error::Domain(format!("point {x:?} outside target support")));
        }
        Ok(self.eval(x))
    }

    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        match &self.density {
            Density::Gaussian(_, g) => g.log_density(x),
            Density::Mixture(_, comps) => {
                let mut scratch = vec![0.0; self.dim];
                let terms: Vec<f64> = comps
                    .iter()
                    .map(|(lw, g)| lw + g.log_density_with(x, &mut scratch))
                    .collect();
                log_sum_exp(&terms)
            }
            Density::LogitNormal { loc, scale } => {
                let v = x[0];
                let z = ((v / (1.0 - v)).ln() - loc) / scale;
                -0.5 * LN_2PI - scale.ln() - 0.5 * z * z - v.ln() - (-v).ln_1p()
            }
            Density::Custom(f) => f(x),
        }
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// The three experiment targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentTarget {
    Gaussian,
    Mixture,
    LogitNormal,
}

impl ExperimentTarget {
    pub const ALL: [ExperimentTarget; 3] = [Self::Gaussian, Self::Mixture, Self::LogitNormal];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Mixture => "mixture",
            Self::LogitNormal => "logitnormal",
        }
    }

    /// The box `D` whose probability the experiment estimates.
    pub fn region(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Self::Gaussian | Self::Mixture => (vec![-1.0, -1.0], vec![1.0, 1.0]),
            Self::LogitNormal => (vec![0.25], vec![0.75]),
        }
    }
}

impl fmt::Display for ExperimentTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "mixture" => Ok(Self::Mixture),
            "logitnormal" => Ok(Self::LogitNormal),
            other => Err(Error::Config(format!(
                "unknown target preset {other:?} (expected gaussian | mixture | logitnormal)"
            ))),
        }
    }
}

/// Builds an experiment target by name.
pub fn make_experiment_target(name: &str) -> Result<Target> {
    Ok(experiment_target(name.parse()?))
}

pub fn experiment_target(which: ExperimentTarget) -> Target {
    match which {
        ExperimentTarget::Gaussian => Target::gaussian(
            GaussianSpec::new(vec![1.0, -1.0], vec![2.0, -0.5, -0.5, 2.0])
                .expect("experiment covariance is PD"),
        ),
        ExperimentTarget::Mixture => {
            let identity = vec![1.0, 0.0, 0.0, 1.0];
            let c1 = GaussianSpec::new(vec![3.0, 0.0], identity.clone()).expect("PD");
            let c2 = GaussianSpec::new(vec![-3.0, 0.0], identity).expect("PD");
            Target::mixture(MixtureSpec::new(vec![(0.5, c1), (0.5, c2)]).expect("weights sum to 1"))
        }
        ExperimentTarget::LogitNormal => Target::logit_normal(0.0, 1.0).expect("valid scale"),
    }
}
