use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum node count per dimension.
pub const MIN_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Midpoint,
    GaussLegendre,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on `P_n` from the Tricomi-style initial guess
/// `cos(π(i + 3/4)/(n + 1/2))`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes and weights of one rule on `[a, b]`.
pub fn rule(scheme: Scheme, n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    match scheme {
        Scheme::GaussLegendre => {
            let (x, w) = gauss_legendre(n);
            (
                x.iter().map(|t| mid + half * t).collect(),
                w.iter().map(|v| v * half).collect(),
            )
        }
        Scheme::Midpoint => {
            let h = (b - a) / n as f64;
            (
                (0..n).map(|i| a + (i as f64 + 0.5) * h).collect(),
                vec![h; n],
            )
        }
    }
}

/// Tensor-product quadrature grid over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub bounds: Vec<(f64, f64)>,
    pub nodes: Vec<usize>,
    pub scheme: Scheme,
}

impl QuadratureGrid {
    pub fn new(bounds: Vec<(f64, f64)>, nodes: Vec<usize>, scheme: Scheme) -> Result<Self> {
        if bounds.len() != nodes.len() || bounds.is_empty() {
            return Err(Error::Config(
                "grid needs one node count per dimension".into(),
            ));
        }
        if let Some(n) = nodes.iter().find(|n| **n < MIN_NODES) {
            return Err(Error::Config(format!(
                "quadrature needs at least {MIN_NODES} nodes per dimension, got {n}"
            )));
        }
        if bounds
            .iter()
            .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Config(format!(
                "invalid quadrature bounds {bounds:?}"
            )));
        }
        Ok(Self {
            bounds,
            nodes,
            scheme,
        })
    }

    pub fn uniform(bounds: Vec<(f64, f64)>, nodes: usize, scheme: Scheme) -> Result<Self> {
        let n = bounds.len();
        Self::new(bounds, vec![nodes; n], scheme)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn total_nodes(&self) -> usize {
        self.nodes.iter().product()
    }

    /// Same box with every node count doubled.
    pub fn refined(&self) -> Self {
        Self {
            bounds: self.bounds.clone(),
            nodes: self.nodes.iter().map(|n| 2 * n).collect(),
            scheme: self.scheme,
        }
    }

    /// `∫ f` over the box.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let rules: Vec<(Vec<f64>, Vec<f64>)> = self
            .bounds
            .iter()
            .zip(&self.nodes)
            .map(|(&(a, b), &n)| rule(self.scheme, n, a, b))
            .collect();
        let d = self.dim();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        let mut total = 0.0;
        'outer: loop {
            let mut w = 1.0;
            for j in 0..d {
                x[j] = rules[j].0[idx[j]];
                w *= rules[j].1[idx[j]];
            }
            total += w * f(&x);
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < self.nodes[j] {
                    continue 'outer;
                }
                idx[j] = 0;
            }
            break;
        }
        total
    }

    /// Integrates on this grid and its doublings until two successive values
    /// agree to `rel_tol`, giving up after `max_doublings`. Returns the value
    /// and the node count per dimension that produced it.
    pub fn integrate_refined<F: FnMut(&[f64]) -> f64>(
        &self,
        mut f: F,
        rel_tol: f64,
        max_doublings: usize,
    ) -> Result<(f64, usize)> {
        let mut grid = self.clone();
        let mut prev = grid.integrate(&mut f);
        for _ in 0..max_doublings {
            grid = grid.refined();
            let next = grid.integrate(&mut f);
            if (next - prev).abs() <= rel_tol * next.abs().max(f64::MIN_POSITIVE) {
                return Ok((next, grid.nodes[0]));
            }
            prev = next;
        }
        Err(Error::Accuracy(format!(
            "quadrature did not converge to rel. tol {rel_tol} within {} nodes per dimension",
            grid.nodes[0]
        )))
    }
}
