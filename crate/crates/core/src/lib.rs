//! Optimised adaptive importance sampling (OAIS) with adaptive optimizers.
//!
//! A parametric proposal `q_θ` is adapted by stochastic minimization of
//! `R(θ) = E_q[Π²/q²]`, the second moment of the importance weights, while
//! every iteration reports a self-normalized importance sampling (SNIS)
//! estimate of `E_π[φ]`. The update map can be plain SGD, Adam or AdaGrad.
//!
//! Module map:
//!
//! - [`targets`]: unnormalized target densities, including the three
//!   experiment targets (Gaussian, bimodal mixture, logit-normal).
//! - [`proposals`]: Gaussian (Cholesky-parameterized) and Beta
//!   (log-parameterized) proposal families with sampling, log-density and
//!   score.
//! - [`montecarlo`]: importance weights, the SNIS estimator, and unbiased
//!   estimators of `R(θ)` and `∇R(θ)`.
//! - [`optimizers`]: SGD, Adam and AdaGrad as pure state transitions.
//! - [`oais`]: the adaptation loop, run traces and multi-run MSE curves.
//! - [`oracle`]: independent ground truth (closed-form χ², quadrature,
//!   finite differences, Polyak–Łojasiewicz check).

pub mod error;
pub(crate) mod linalg;
pub mod montecarlo;
pub mod oais;
pub mod optimizers;
pub mod oracle;
pub mod proposals;
pub mod targets;

pub use error::{Error, Result};
pub use montecarlo::{TestFunction, WeightedBatch};
pub use oais::{run_mse, run_oais, MseCurve, OaisProblem, RunStatus, RunTrace};
pub use optimizers::{OptimizerSpec, OptimizerState, Schedule};
pub use proposals::{ParamVector, ProposalFamily, ProposalParams};
pub use targets::{GaussianSpec, MixtureSpec, Points, Target};
