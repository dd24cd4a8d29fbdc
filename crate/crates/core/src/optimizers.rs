//! Update maps `θ_{k+1} = T(θ_k)`: SGD, Adam and diagonal AdaGrad.
//!
//! Every step is a pure function from (state, θ, g) to (state', θ'). In both
//! adaptive rules `ε` sits outside the square root: `√v̂ + ε`, `√acc + ε`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::proposals::ParamVector;

/// Default `ε` for Adam and AdaGrad.
pub const DEFAULT_EPS: f64 = 1e-8;

/// Step-size schedule `t_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "base", rename_all = "snake_case")]
pub enum Schedule {
    /// `t_k = base`
    Constant(f64),
    /// `t_k = base / √(k+1)`
    InvSqrt(f64),
}

impl Schedule {
    pub fn rate(&self, k: u64) -> f64 {
        match *self {
            Schedule::Constant(base) => base,
            Schedule::InvSqrt(base) => base / ((k + 1) as f64).sqrt(),
        }
    }

    pub fn base(&self) -> f64 {
        match *self {
            Schedule::Constant(b) | Schedule::InvSqrt(b) => b,
        }
    }

    fn validate(&self) -> Result<()> {
        let b = self.base();
        if b > 0.0 && b.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "learning rate must be positive, got {b}"
            )))
        }
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub k: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments. Requires `0 < β₁ < β₂ < 1` and `ε ≥ 0`.
    pub fn new(p: usize, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(beta2 > 0.0 && beta2 < 1.0) {
            return Err(Error::Config(format!(
                "beta2 must lie in (0, 1), got {beta2}"
            )));
        }
        if !(beta1 > 0.0 && beta1 < beta2) {
            return Err(Error::Config(format!(
                "beta1 must lie in (0, beta2 = {beta2}), got {beta1}"
            )));
        }
        check_eps(eps)?;
        Ok(Self {
            m: vec![0.0; p],
            v: vec![0.0; p],
            k: 0,
            beta1,
            beta2,
            eps,
        })
    }
}

/// Accumulated squared gradients (the diagonal of `G_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradState {
    pub acc: Vec<f64>,
    pub k: u64,
    pub eps: f64,
}

impl AdaGradState {
    pub fn new(p: usize, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self {
            acc: vec![0.0; p],
            k: 0,
            eps,
        })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    // ε = 0 is allowed so that exact symmetry fixtures can be written.
    if eps >= 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "eps must be finite and nonnegative, got {eps}"
        )))
    }
}

fn check_finite(g: &[f64]) -> Result<()> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("gradient"))
    }
}

/// `θ − t_k g`.
pub fn sgd_step(theta: &ParamVector, g: &[f64], schedule: Schedule, k: u64) -> Result<ParamVector> {
    check_len(theta.len(), g.len())?;
    check_finite(g)?;
    let t = schedule.rate(k);
    ParamVector::new(theta.iter().zip(g).map(|(th, gi)| th - t * gi).collect())
}

/// One Adam step using `t_k` at `k = state.k`.
pub fn adam_step(
    state: AdamState,
    theta: &ParamVector,
    g: &[f64],
    schedule: Schedule,
) -> Result<(AdamState, ParamVector)> {
    check_len(theta.len(), g.len())?;
    check_len(state.m.len(), g.len())?;
    check_finite(g)?;
    let AdamState {
        mut m,
        mut v,
        k,
        beta1,
        beta2,
        eps,
    } = state;
    let t = schedule.rate(k);
    let power = i32::try_from(k + 1).unwrap_or(i32::MAX);
    let bc1 = 1.0 - beta1.powi(power);
    let bc2 = 1.0 - beta2.powi(power);
    let mut next = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
        let m_hat = m[j] / bc1;
        let v_hat = v[j] / bc2;
        next.push(theta[j] - t * m_hat / (v_hat.sqrt() + eps));
    }
    let theta = ParamVector::new(next)?;
    Ok((
        AdamState {
            m,
            v,
            k: k + 1,
            beta1,
            beta2,
            eps,
        },
        theta,
    ))
}

/// One diagonal AdaGrad step: `acc += g²`, `θ − t_k g / (√acc + ε)`.
pub fn adagrad_step(
    state: AdaGradState,
    theta: &ParamVector,
    g: &[f64],
    schedule: Schedule,
) -> Result<(AdaGradState, ParamVector)> {
    check_len(theta.len(), g.len())?;
    check_len(state.acc.len(), g.len())?;
    check_finite(g)?;
    let AdaGradState { mut acc, k, eps } = state;
    let t = schedule.rate(k);
    let mut next = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        acc[j] += g[j] * g[j];
        let denom = acc[j].sqrt() + eps;
        // with ε = 0 a zero gradient leaves the coordinate untouched
        let step = if g[j] == 0.0 { 0.0 } else { t * g[j] / denom };
        next.push(theta[j] - step);
    }
    let theta = ParamVector::new(next)?;
    Ok((AdaGradState { acc, k: k + 1, eps }, theta))
}

/// Optimizer choice and hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerSpec {
    Sgd {
        schedule: Schedule,
    },
    Adam {
        schedule: Schedule,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    AdaGrad {
        schedule: Schedule,
        eps: f64,
    },
}

impl OptimizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sgd { .. } => "sgd",
            Self::Adam { .. } => "adam",
            Self::AdaGrad { .. } => "adagrad",
        }
    }

    pub fn schedule(&self) -> Schedule {
        match *self {
            Self::Sgd { schedule }
            | Self::Adam { schedule, .. }
            | Self::AdaGrad { schedule, .. } => schedule,
        }
    }

    /// Fresh state for a parameter vector of length `p`.
    pub fn init(&self, p: usize) -> Result<OptimizerState> {
        self.schedule().validate()?;
        Ok(match *self {
            Self::Sgd { schedule } => OptimizerState::Sgd { schedule, k: 0 },
            Self::Adam {
                schedule,
                beta1,
                beta2,
                eps,
            } => OptimizerState::Adam {
                schedule,
                state: AdamState::new(p, beta1, beta2, eps)?,
            },
            Self::AdaGrad { schedule, eps } => OptimizerState::AdaGrad {
                schedule,
                state: AdaGradState::new(p, eps)?,
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.init(1).map(|_| ())
    }
}

/// Running optimizer state with its schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd {
        schedule: Schedule,
        k: u64,
    },
    Adam {
        schedule: Schedule,
        state: AdamState,
    },
    AdaGrad {
        schedule: Schedule,
        state: AdaGradState,
    },
}

impl OptimizerState {
    pub fn iteration(&self) -> u64 {
        match self {
            Self::Sgd { k, .. } => *k,
            Self::Adam { state, .. } => state.k,
            Self::AdaGrad { state, .. } => state.k,
        }
    }

    pub fn step(self, theta: &ParamVector, g: &[f64]) -> Result<(Self, ParamVector)> {
        match self {
            Self::Sgd { schedule, k } => {
                let next = sgd_step(theta, g, schedule, k)?;
                Ok((Self::Sgd { schedule, k: k + 1 }, next))
            }
            Self::Adam { schedule, state } => {
                let (state, next) = adam_step(state, theta, g, schedule)?;
                Ok((Self::Adam { schedule, state }, next))
            }
            Self::AdaGrad { schedule, state } => {
                let (state, next) = adagrad_step(state, theta, g, schedule)?;
                Ok((Self::AdaGrad { schedule, state }, next))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn schedules() {
        assert_eq!(Schedule::Constant(0.3).rate(17), 0.3);
        assert_abs_diff_eq!(Schedule::InvSqrt(1e-4).rate(3), 5e-5, epsilon = 1e-20);
        assert_eq!(Schedule::InvSqrt(2.0).rate(0), 2.0);
    }

    #[test]
    fn sgd_examples() {
        let th = pv(&[0.4, -2.0]);
        assert_eq!(
            sgd_step(&th, &[0.0, 0.0], Schedule::Constant(0.1), 0).unwrap(),
            th
        );
        let next = sgd_step(&pv(&[0.0]), &[1.0], Schedule::Constant(0.1), 0).unwrap();
        assert_abs_diff_eq!(next[0], -0.1, epsilon = 1e-17);
        let next = sgd_step(&pv(&[0.0]), &[1.0], Schedule::InvSqrt(1e-4), 3).unwrap();
        assert_abs_diff_eq!(next[0], -5e-5, epsilon = 1e-20);
        assert!(matches!(
            sgd_step(&th, &[f64::NAN, 0.0], Schedule::Constant(0.1), 0),
            Err(Error::NonFinite(_))
        ));
    }

    // Straight-line transcription of the Adam recursions for two steps of
    // g = 1, written out without loops.
    #[test]
    fn adam_two_steps_reference() {
        let (b1, b2, a, eps) = (0.9f64, 0.999f64, 0.01, 1e-8);
        let m1 = (1.0 - b1) * 1.0;
        let v1 = (1.0 - b2) * 1.0;
        let th1 = 0.0 - a * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * 1.0;
        let v2 = b2 * v1 + (1.0 - b2) * 1.0;
        let th2 = th1 - a * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);

        let mut state = AdamState::new(1, b1, b2, eps).unwrap();
        let mut theta = pv(&[0.0]);
        for _ in 0..2 {
            let out = adam_step(state, &theta, &[1.0], Schedule::Constant(a)).unwrap();
            state = out.0;
            theta = out.1;
        }
        assert_abs_diff_eq!(theta[0], th2, epsilon = 1e-12);
        // numpy reference
        assert_abs_diff_eq!(theta[0], -0.019_999_999_799_999_932, epsilon = 1e-12);
    }

    #[test]
    fn zero_gradients_never_move() {
        let th = pv(&[1.0, -3.0]);
        let mut adam = OptimizerSpec::Adam {
            schedule: Schedule::Constant(0.01),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
        .init(2)
        .unwrap();
        let mut ada = OptimizerSpec::AdaGrad {
            schedule: Schedule::Constant(0.1),
            eps: 1e-8,
        }
        .init(2)
        .unwrap();
        let (mut t1, mut t2) = (th.clone(), th.clone());
        for _ in 0..10 {
            let (s, n) = adam.step(&t1, &[0.0, 0.0]).unwrap();
            adam = s;
            t1 = n;
            let (s, n) = ada.step(&t2, &[0.0, 0.0]).unwrap();
            ada = s;
            t2 = n;
        }
        assert_eq!(t1, th);
        assert_eq!(t2, th);
        match ada {
            OptimizerState::AdaGrad { state, .. } => assert_eq!(state.acc, vec![0.0, 0.0]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn adagrad_constant_gradient() {
        let mut state = AdaGradState::new(1, 1e-8).unwrap();
        let mut theta = pv(&[0.0]);
        for _ in 0..4 {
            let out = adagrad_step(state, &theta, &[1.0], Schedule::Constant(0.1)).unwrap();
            state = out.0;
            theta = out.1;
        }
        let expected = -0.1 * (1.0 + 1.0 / 2f64.sqrt() + 1.0 / 3f64.sqrt() + 0.5);
        assert_abs_diff_eq!(theta[0], expected, epsilon = 1e-8);
        assert_abs_diff_eq!(theta[0], -0.278_445_702_954_284_06, epsilon = 1e-12);
    }

    #[test]
    fn first_step_is_normalized_sign() {
        for c in [3.0, -0.2, 1e-3] {
            let (_, th) = adam_step(
                AdamState::new(1, 0.9, 0.999, 1e-8).unwrap(),
                &pv(&[0.0]),
                &[c],
                Schedule::Constant(0.01),
            )
            .unwrap();
            assert_abs_diff_eq!(th[0], -0.01 * c / (c.abs() + 1e-8), epsilon = 1e-15);
            let (_, th) = adagrad_step(
                AdaGradState::new(1, 1e-8).unwrap(),
                &pv(&[0.0]),
                &[c],
                Schedule::Constant(0.1),
            )
            .unwrap();
            assert_abs_diff_eq!(th[0], -0.1 * c / (c.abs() + 1e-8), epsilon = 1e-15);
        }
    }

    #[test]
    fn invalid_hyperparameters() {
        assert!(AdamState::new(1, 0.999, 0.9, 1e-8).is_err());
        assert!(AdamState::new(1, 0.9, 1.0, 1e-8).is_err());
        assert!(AdamState::new(1, 0.0, 0.5, 1e-8).is_err());
        assert!(AdaGradState::new(1, -1.0).is_err());
        assert!(OptimizerSpec::Sgd {
            schedule: Schedule::Constant(0.0)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn non_finite_gradient_signals_divergence() {
        let r = adam_step(
            AdamState::new(1, 0.9, 0.999, 1e-8).unwrap(),
            &pv(&[0.0]),
            &[f64::INFINITY],
            Schedule::Constant(0.01),
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
        let r = adagrad_step(
            AdaGradState::new(1, 1e-8).unwrap(),
            &pv(&[0.0]),
            &[f64::NAN],
            Schedule::Constant(0.1),
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
        // a finite but huge step that overflows θ is also caught
        let r = sgd_step(&pv(&[f64::MAX]), &[-f64::MAX], Schedule::Constant(10.0), 0);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    proptest! {
        #[test]
        fn adam_first_direction_independent_of_betas(
            g in proptest::collection::vec(-50.0f64..50.0, 1..6),
            pair in 0usize..5,
        ) {
            let betas = [(0.9, 0.999), (0.5, 0.9), (0.1, 0.2), (0.99, 0.9999), (0.3, 0.31)];
            let (b1, b2) = betas[pair];
            let theta = ParamVector::new(vec![0.0; g.len()]).unwrap();
            let (_, next) = adam_step(
                AdamState::new(g.len(), b1, b2, 1e-8).unwrap(),
                &theta,
                &g,
                Schedule::Constant(1.0),
            ).unwrap();
            for (n, gi) in next.iter().zip(&g) {
                let expected = -gi / (gi.abs() + 1e-8);
                prop_assert!((n - expected).abs() < 1e-12);
            }
        }

        #[test]
        fn adagrad_steps_bounded_by_rate(
            gs in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 1..40),
            base in 1e-3f64..1.0,
            inv in proptest::bool::ANY,
        ) {
            let schedule = if inv { Schedule::InvSqrt(base) } else { Schedule::Constant(base) };
            let mut state = AdaGradState::new(3, 1e-8).unwrap();
            let mut theta = ParamVector::new(vec![0.0; 3]).unwrap();
            for (k, g) in gs.iter().enumerate() {
                let prev_acc = state.acc.clone();
                let (s, next) = adagrad_step(state, &theta, g, schedule).unwrap();
                for j in 0..3 {
                    prop_assert!((next[j] - theta[j]).abs() <= schedule.rate(k as u64) * (1.0 + 1e-12));
                    prop_assert!(s.acc[j] >= prev_acc[j]);
                }
                state = s;
                theta = next;
            }
        }

        #[test]
        fn adam_steps_bounded(
            gs in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 2), 1..40),
        ) {
            // Cauchy–Schwarz on the moment sums:
            // |m̂|/√v̂ ≤ (1−β₁)/(1−β₁^{k+1}) · √((1−β₂^{k+1})/(1−β₂)) / √(1−β₁²/β₂)
            let (b1, b2) = (0.9f64, 0.999f64);
            let mut state = AdamState::new(2, b1, b2, 1e-8).unwrap();
            let mut theta = ParamVector::new(vec![0.0; 2]).unwrap();
            let t = 0.01;
            for (k, g) in gs.iter().enumerate() {
                let (s, next) = adam_step(state, &theta, g, Schedule::Constant(t)).unwrap();
                let bound = t * (1.0 - b1) / (1.0 - b1.powi(k as i32 + 1))
                    * ((1.0 - b2.powi(k as i32 + 1)) / (1.0 - b2)).sqrt()
                    / (1.0 - b1 * b1 / b2).sqrt();
                for j in 0..2 {
                    prop_assert!((next[j] - theta[j]).abs() <= 1.2 * bound);
                    prop_assert!(s.v[j] >= 0.0);
                }
                state = s;
                theta = next;
            }
        }

        #[test]
        fn negated_gradients_negate_iterates(
            gs in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 2), 1..30),
            which in 0usize..3,
        ) {
            let spec = match which {
                0 => OptimizerSpec::Sgd { schedule: Schedule::InvSqrt(0.1) },
                1 => OptimizerSpec::Adam { schedule: Schedule::Constant(0.01), beta1: 0.9, beta2: 0.999, eps: 0.0 },
                _ => OptimizerSpec::AdaGrad { schedule: Schedule::Constant(0.1), eps: 0.0 },
            };
            let (mut s1, mut s2) = (spec.init(2).unwrap(), spec.init(2).unwrap());
            let zero = ParamVector::new(vec![0.0; 2]).unwrap();
            let (mut t1, mut t2) = (zero.clone(), zero);
            for g in &gs {
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                let (a, b) = s1.step(&t1, g).unwrap();
                s1 = a; t1 = b;
                let (a, b) = s2.step(&t2, &neg).unwrap();
                s2 = a; t2 = b;
                for j in 0..2 {
                    prop_assert_eq!(t1[j], -t2[j]);
                }
            }
        }
    }
}
