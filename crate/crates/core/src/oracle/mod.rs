//! Reference values computed independently of the sampler: closed-form `ρ`
//! between Gaussians, quadrature probabilities, the logit-normal interval
//! probability, finite differences and a Polyak–Łojasiewicz check.

pub mod quadrature;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::proposals::{ParamVector, ProposalFamily, ProposalParams};
use crate::targets::{
    experiment_target, ExperimentTarget, GaussianSpec, MixtureSpec, Support, Target,
};

pub use quadrature::{QuadratureGrid, Scheme};

/// Relative tolerance for refined quadrature.
pub const QUAD_REL_TOL: f64 = 1e-6;

const MAX_DOUBLINGS: usize = 6;

fn matrix(values: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, values)
}

struct RhoParts {
    log_rho: f64,
    a_inv_b: DVector<f64>,
    q_prec: DMatrix<f64>,
}

fn rho_parts(pi: &GaussianSpec, q: &GaussianSpec) -> Option<RhoParts> {
    let d = pi.dim();
    if q.dim() != d {
        return None;
    }
    let s1 = matrix(pi.covariance(), d);
    let s2 = matrix(q.covariance(), d);
    let p1 = s1.clone().cholesky()?.inverse();
    let p2 = s2.clone().cholesky()?.inverse();
    let a = &p1 * 2.0 - &p2;
    let a_chol = a.clone().cholesky()?;
    let m1 = DVector::from_column_slice(pi.mean());
    let m2 = DVector::from_column_slice(q.mean());
    let b = &p1 * &m1 * 2.0 - &p2 * &m2;
    let c = 2.0 * m1.dot(&(&p1 * &m1)) - m2.dot(&(&p2 * &m2));
    let a_inv_b = a_chol.solve(&b);
    let log_rho = -s1.determinant().ln() + 0.5 * s2.determinant().ln() - 0.5 * a.determinant().ln()
        + 0.5 * (b.dot(&a_inv_b) - c);
    Some(RhoParts {
        log_rho,
        a_inv_b,
        q_prec: p2,
    })
}

/// `ρ = ∫ π²/q` for normalized Gaussians. Returns `+∞` when
/// `2Σ_π⁻¹ − Σ_q⁻¹` is not positive definite.
pub fn rho_gaussian(pi: &GaussianSpec, q: &GaussianSpec) -> f64 {
    match rho_parts(pi, q) {
        Some(parts) => parts.log_rho.exp(),
        None => f64::INFINITY,
    }
}

/// `∂ρ/∂μ_q`, or `None` where `ρ` is infinite.
pub fn rho_gaussian_mean_gradient(pi: &GaussianSpec, q: &GaussianSpec) -> Option<Vec<f64>> {
    let parts = rho_parts(pi, q)?;
    let rho = parts.log_rho.exp();
    let m2 = DVector::from_column_slice(q.mean());
    let g = &parts.q_prec * (m2 - &parts.a_inv_b) * rho;
    Some(g.iter().copied().collect())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(X ∈ box)` for a target of dimension ≤ 2, by refined quadrature of the
/// normalized density over the grid's box.
pub fn rect_prob(target: &Target, grid: &QuadratureGrid) -> Result<f64> {
    rect_prob_with_nodes(target, grid).map(|(p, _)| p)
}

/// Like [`rect_prob`], also returning the node count per dimension used.
pub fn rect_prob_with_nodes(target: &Target, grid: &QuadratureGrid) -> Result<(f64, usize)> {
    if target.dim() > 2 {
        return Err(Error::OracleUnavailable(format!(
            "quadrature is limited to dimension 2, target has {}",
            target.dim()
        )));
    }
    check_len(target.dim(), grid.dim())?;
    let log_z = target
        .log_norm_const()
        .ok_or_else(|| Error::OracleUnavailable("target normalizing constant is unknown".into()))?;
    let density = |x: &[f64]| {
        if target.support().contains(x) {
            (target.eval(x) - log_z).exp()
        } else {
            0.0
        }
    };
    grid.integrate_refined(density, QUAD_REL_TOL, MAX_DOUBLINGS)
}

/// `P(a ≤ X ≤ b)` for `X = sigmoid(Z)`, `Z ~ N(0, 1)`.
pub fn logitnormal_interval_prob(a: f64, b: f64) -> Result<f64> {
    logitnormal_interval_prob_with(0.0, 1.0, a, b)
}

/// `P(a ≤ X ≤ b)` for `X = sigmoid(Z)`, `Z ~ N(loc, scale²)`. Endpoints may be
/// 0 or 1.
pub fn logitnormal_interval_prob_with(loc: f64, scale: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a >= b {
        return Err(Error::Domain(format!("need 0 ≤ a < b ≤ 1, got ({a}, {b})")));
    }
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let z = |p: f64| (logit(p) - loc) / scale;
    Ok(normal_cdf(z(b)) - normal_cdf(z(a)))
}

/// `P(X ∈ [lower, upper])` for a mixture whose components have diagonal
/// covariance, as a sum of products of 1D normal probabilities.
pub fn mixture_rect_prob_product(
    mixture: &MixtureSpec,
    lower: &[f64],
    upper: &[f64],
) -> Result<f64> {
    let d = mixture.dim();
    check_len(d, lower.len())?;
    check_len(d, upper.len())?;
    let mut total = 0.0;
    for (w, g) in mixture.components() {
        let cov = g.covariance();
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || cov[i * d + j] == 0.0));
        if !diagonal {
            return Err(Error::OracleUnavailable(
                "product formula needs diagonal component covariances".into(),
            ));
        }
        let mut p = *w;
        for i in 0..d {
            let (m, s) = (g.mean()[i], cov[i * d + i].sqrt());
            p *= normal_cdf((upper[i] - m) / s) - normal_cdf((lower[i] - m) / s);
        }
        total += p;
    }
    Ok(total)
}

/// Central differences of `f` at `theta`, one coordinate at a time.
pub fn fd_gradient<F>(f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("step must be positive, got {h}")));
    }
    let mut x = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        x[i] = theta[i] + h;
        let up = f(&x);
        x[i] = theta[i] - h;
        let down = f(&x);
        x[i] = theta[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Domain(format!(
                "objective is not finite within {h} of coordinate {i}"
            )));
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// An objective with a known minimum value and a closed-form gradient.
pub trait SmoothObjective {
    fn value(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;
    fn min_value(&self) -> f64;
}

/// `R(θ) = exp(Σ (μ_π,i − θ_i)²)`: the second moment of the weights for a
/// unit-variance Gaussian target and a mean-only unit-variance proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeanObjective {
    pub target_mean: Vec<f64>,
}

impl SmoothObjective for GaussianMeanObjective {
    fn value(&self, theta: &[f64]) -> f64 {
        let s: f64 = self
            .target_mean
            .iter()
            .zip(theta)
            .map(|(m, t)| (m - t).powi(2))
            .sum();
        s.exp()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let r = self.value(theta);
        self.target_mean
            .iter()
            .zip(theta)
            .map(|(m, t)| 2.0 * (t - m) * r)
            .collect()
    }

    fn min_value(&self) -> f64 {
        1.0
    }
}

/// Whether `R(θ) − R* ≤ ‖∇R(θ)‖² / (2μ)` holds at every grid point.
pub fn pl_check<O: SmoothObjective + ?Sized>(grid: &[ParamVector], mu: f64, objective: &O) -> bool {
    grid.iter().all(|theta| {
        let gap = objective.value(theta) - objective.min_value();
        let g2: f64 = objective.gradient(theta).iter().map(|g| g * g).sum();
        gap <= g2 / (2.0 * mu)
    })
}

/// Evenly spaced 1D parameter grid on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<ParamVector>> {
    if points < 2 || !(lo < hi) {
        return Err(Error::Config(format!(
            "bad grid [{lo}, {hi}] with {points} points"
        )));
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| ParamVector::new(vec![lo + i as f64 * step]))
        .collect()
}

/// A box holding essentially all mass of `π²/q` for the pair, spanning
/// `half_width` standard deviations around every Gaussian piece involved.
pub fn covering_box(
    target: &Target,
    family: &ProposalFamily,
    theta: &ParamVector,
    half_width: f64,
) -> Result<Vec<(f64, f64)>> {
    let d = target.dim();
    let mut pieces: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let sd = |g: &GaussianSpec| -> Vec<f64> {
        (0..g.dim())
            .map(|i| g.covariance()[i * g.dim() + i].sqrt())
            .collect()
    };
    if let Some(g) = target.gaussian_spec() {
        pieces.push((g.mean().to_vec(), sd(g)));
    } else if let Some(m) = target.mixture_spec() {
        for (_, g) in m.components() {
            pieces.push((g.mean().to_vec(), sd(g)));
        }
    } else if *target.support() == Support::UnitInterval {
        return Ok(vec![(0.0, 1.0)]);
    } else if let Support::Rect { lower, upper } = target.support() {
        return Ok(lower.iter().copied().zip(upper.iter().copied()).collect());
    } else {
        return Err(Error::OracleUnavailable(
            "no integration box known for this target".into(),
        ));
    }
    if let ProposalParams::Gaussian(p) = family.unpack(theta)? {
        let g = GaussianSpec::new(p.mean().to_vec(), p.covariance())?;
        pieces.push((g.mean().to_vec(), sd(&g)));
    }
    Ok((0..d)
        .map(|i| {
            let lo = pieces
                .iter()
                .map(|(m, s)| m[i] - half_width * s[i])
                .fold(f64::INFINITY, f64::min);
            let hi = pieces
                .iter()
                .map(|(m, s)| m[i] + half_width * s[i])
                .fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect())
}

fn r_integrand<'a>(
    target: &'a Target,
    family: &'a ProposalFamily,
    theta: &ParamVector,
) -> Result<impl Fn(&[f64]) -> f64 + 'a> {
    let q = family.prepare(theta)?;
    Ok(move |x: &[f64]| {
        if !target.support().contains(x) {
            return 0.0;
        }
        match q.log_density(x) {
            Ok(lq) => (2.0 * target.eval(x) - lq).exp(),
            Err(_) => 0.0,
        }
    })
}

/// `R(θ) = ∫ Π²/q_θ` on a fixed grid.
pub fn r_quadrature(
    target: &Target,
    family: &ProposalFamily,
    theta: &ParamVector,
    grid: &QuadratureGrid,
) -> Result<f64> {
    check_len(target.dim(), grid.dim())?;
    let f = r_integrand(target, family, theta)?;
    let v = grid.integrate(f);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("second moment quadrature"))
    }
}

fn gaussian_pair(
    target: &Target,
    family: &ProposalFamily,
    theta: &ParamVector,
) -> Result<Option<(GaussianSpec, GaussianSpec)>> {
    let Some(pi) = target.gaussian_spec() else {
        return Ok(None);
    };
    match family.unpack(theta)? {
        ProposalParams::Gaussian(p) => Ok(Some((
            pi.clone(),
            GaussianSpec::new(p.mean().to_vec(), p.covariance())?,
        ))),
        ProposalParams::Beta(_) => Ok(None),
    }
}

/// `R(θ)` from the closed form for Gaussian pairs and refined quadrature
/// otherwise. Infinite `R` is an error.
pub fn r_oracle(target: &Target, family: &ProposalFamily, theta: &ParamVector) -> Result<f64> {
    if let Some((pi, q)) = gaussian_pair(target, family, theta)? {
        let log_z = target.log_norm_const().unwrap_or(0.0);
        let r = (2.0 * log_z).exp() * rho_gaussian(&pi, &q);
        return if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::OracleUnavailable(
                "second moment is infinite at this θ".into(),
            ))
        };
    }
    let grid = r_grid(target, family, theta)?;
    let f = r_integrand(target, family, theta)?;
    Ok(grid.integrate_refined(f, QUAD_REL_TOL, MAX_DOUBLINGS)?.0)
}

/// `ρ(θ) = R(θ)/Z²`; needs a known normalizing constant.
pub fn rho_oracle(target: &Target, family: &ProposalFamily, theta: &ParamVector) -> Result<f64> {
    let log_z = target
        .log_norm_const()
        .ok_or_else(|| Error::OracleUnavailable("target normalizing constant is unknown".into()))?;
    Ok(r_oracle(target, family, theta)? * (-2.0 * log_z).exp())
}

fn r_grid(target: &Target, family: &ProposalFamily, theta: &ParamVector) -> Result<QuadratureGrid> {
    if target.dim() > 2 {
        return Err(Error::OracleUnavailable(format!(
            "no second-moment oracle in dimension {}",
            target.dim()
        )));
    }
    let bounds = covering_box(target, family, theta, 12.0)?;
    QuadratureGrid::uniform(bounds, 128, Scheme::GaussLegendre)
}

/// `∇R(θ)`: finite differences of the closed form for Gaussian pairs, and of
/// quadrature on a fixed converged grid otherwise.
pub fn grad_r_oracle(
    target: &Target,
    family: &ProposalFamily,
    theta: &ParamVector,
) -> Result<Vec<f64>> {
    const H: f64 = 1e-5;
    let point = |t: &[f64]| ParamVector::new(t.to_vec());
    if gaussian_pair(target, family, theta)?.is_some() {
        r_oracle(target, family, theta)?;
        return fd_gradient(
            |t| {
                point(t)
                    .and_then(|p| r_oracle(target, family, &p))
                    .unwrap_or(f64::NAN)
            },
            theta,
            H,
        );
    }
    let base = r_grid(target, family, theta)?;
    let f = r_integrand(target, family, theta)?;
    let (_, nodes) = base.integrate_refined(f, 1e-10, MAX_DOUBLINGS)?;
    let grid = QuadratureGrid::uniform(base.bounds.clone(), nodes, base.scheme)?;
    fd_gradient(
        |t| {
            point(t)
                .and_then(|p| r_quadrature(target, family, &p, &grid))
                .unwrap_or(f64::NAN)
        },
        theta,
        1e-4,
    )
}

/// One frozen ground-truth value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub truth: f64,
    pub generator: String,
    pub nodes: usize,
}

/// Fixture key for an experiment target.
pub fn fixture_name(which: ExperimentTarget) -> String {
    format!("exp{}", which as usize + 1)
}

/// Computes the ground-truth probability for every experiment.
pub fn compute_fixtures() -> Result<BTreeMap<String, Fixture>> {
    let mut out = BTreeMap::new();
    for which in ExperimentTarget::ALL {
        let target = experiment_target(which);
        let (lo, hi) = which.region();
        let bounds: Vec<(f64, f64)> = lo.iter().copied().zip(hi.iter().copied()).collect();
        let grid = QuadratureGrid::uniform(bounds, 64, Scheme::GaussLegendre)?;
        let (quad, nodes) = rect_prob_with_nodes(&target, &grid)?;
        let fixture = match which {
            ExperimentTarget::Gaussian => Fixture {
                truth: quad,
                generator: "gauss_legendre tensor quadrature".into(),
                nodes,
            },
            ExperimentTarget::Mixture => {
                let mixture = target.mixture_spec().expect("mixture target");
                let product = mixture_rect_prob_product(mixture, &lo, &hi)?;
                if (quad - product).abs() >= 1e-8 {
                    return Err(Error::Accuracy(format!(
                        "mixture quadrature {quad} disagrees with product formula {product}"
                    )));
                }
                Fixture {
                    truth: product,
                    generator: "product of normal cdfs, checked by gauss_legendre quadrature"
                        .into(),
                    nodes,
                }
            }
            ExperimentTarget::LogitNormal => {
                let (loc, scale) = target.logit_normal_params().expect("logit-normal target");
                let exact = logitnormal_interval_prob_with(loc, scale, lo[0], hi[0])?;
                if (quad - exact).abs() >= 1e-8 {
                    return Err(Error::Accuracy(format!(
                        "logit-normal quadrature {quad} disagrees with the analytic value {exact}"
                    )));
                }
                Fixture {
                    truth: exact,
                    generator:
                        "normal cdf of logit endpoints, checked by gauss_legendre quadrature".into(),
                    nodes,
                }
            }
        };
        out.insert(fixture_name(which), fixture);
    }
    Ok(out)
}
