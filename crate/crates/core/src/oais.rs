//! The adaptation loop.
//!
//! Each iteration `k` draws `N` particles from `q_{θ_k}`, reports the SNIS
//! estimate of `φ`, forms `g(θ_k)` from the same batch, and applies the
//! optimizer map. Randomness for iteration `k` of a run comes from its own
//! ChaCha8 stream (`stream = k`) under the run seed, so any iteration can be
//! replayed from its `θ_k` alone.
//!
//! Runs that produce a weight overflow, a degenerate batch or a non-finite
//! parameter stop with [`RunStatus::Diverged`]; this is data, not an error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::montecarlo::{self, TestFunction, WeightedBatch};
use crate::optimizers::OptimizerSpec;
use crate::proposals::{ParamVector, ProposalFamily};
use crate::targets::{Support, Target};

/// Everything one run of the adaptation loop needs.
#[derive(Debug, Clone)]
pub struct OaisProblem {
    pub target: Target,
    pub family: ProposalFamily,
    pub theta0: ParamVector,
    pub phi: TestFunction,
    pub optimizer: OptimizerSpec,
    pub n_particles: usize,
    pub iterations: usize,
}

impl OaisProblem {
    /// Checks the problem before any sampling happens.
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be at least 1".into()));
        }
        if self.target.dim() != self.family.dim() {
            return Err(Error::Config(format!(
                "target dimension {} differs from proposal dimension {}",
                self.target.dim(),
                self.family.dim()
            )));
        }
        let compatible = matches!(
            (self.target.support(), self.family.support()),
            (Support::Real, Support::Real)
                | (Support::UnitInterval, Support::UnitInterval)
                | (Support::Rect { .. }, _)
        );
        if !compatible {
            return Err(Error::Config(format!(
                "proposal support {:?} does not match target support {:?}",
                self.family.support(),
                self.target.support()
            )));
        }
        if let Some((lo, _)) = self.phi.rect() {
            if lo.len() != self.target.dim() {
                return Err(Error::Config(format!(
                    "test-function box has dimension {}, target has {}",
                    lo.len(),
                    self.target.dim()
                )));
            }
        }
        self.family
            .unpack(&self.theta0)
            .map_err(|e| Error::Config(format!("initial parameters: {e}")))?;
        self.optimizer.validate()
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run_index` under `master_seed`:
/// `splitmix64(master_seed ^ splitmix64(run_index))`.
pub fn derive_seed(master_seed: u64, run_index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(run_index))
}

/// Random stream for iteration `k` of the run seeded with `run_seed`.
pub fn iteration_rng(run_seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(k);
    rng
}

/// One iteration's reported quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub k: usize,
    pub theta: ParamVector,
    pub estimate: f64,
    pub r_hat: f64,
    pub grad_norm: f64,
    pub weight_overflow: bool,
    pub floor_hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged { iteration: usize, reason: String },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunStatus::Completed => f.write_str("completed"),
            RunStatus::Diverged { iteration, .. } => write!(f, "diverged@{iteration}"),
        }
    }
}

/// Per-iteration records of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub records: Vec<IterRecord>,
    pub status: RunStatus,
}

impl RunTrace {
    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }
}

/// Result of sampling and weighing one batch at a fixed `θ`.
#[derive(Debug, Clone)]
pub struct BatchEvaluation {
    pub estimate: f64,
    pub r_hat: f64,
    pub gradient: Vec<f64>,
    pub overflow: bool,
    pub floor_hit: bool,
}

/// Draws one batch at `theta` from `rng` and evaluates the estimate,
/// `R̂` and `g(θ)`. The gradient is left empty when the batch overflowed.
pub fn evaluate_batch(
    problem: &OaisProblem,
    theta: &ParamVector,
    rng: &mut ChaCha8Rng,
) -> Result<BatchEvaluation> {
    let proposal = problem.family.prepare(theta)?;
    let points = proposal.sample(rng, problem.n_particles);
    let batch = WeightedBatch::new(&problem.target, &proposal, &points, &problem.phi)?;
    let estimate = batch.snis_estimate();
    if batch.overflow() {
        return Ok(BatchEvaluation {
            estimate,
            r_hat: f64::INFINITY,
            gradient: Vec::new(),
            overflow: true,
            floor_hit: proposal.floor_hit(),
        });
    }
    let squared = batch.squared_weights();
    let p = proposal.param_len();
    let scores = montecarlo::batch_scores(&proposal, &points)?;
    let gradient = montecarlo::grad_from_squared(&squared, scores.chunks_exact(p), p);
    Ok(BatchEvaluation {
        estimate,
        r_hat: squared.iter().sum::<f64>() / squared.len() as f64,
        gradient,
        overflow: false,
        floor_hit: proposal.floor_hit(),
    })
}

/// Runs the adaptation loop for `problem.iterations` updates, recording
/// iterations `0..=T`.
pub fn run_oais(problem: &OaisProblem, seed: u64) -> Result<RunTrace> {
    problem.validate()?;
    let mut optimizer = problem.optimizer.init(problem.family.param_len())?;
    let mut theta = problem.theta0.clone();
    let t_max = problem.iterations;
    let mut records = Vec::with_capacity(t_max + 1);
    let diverged = |records, iteration, e: Error| {
        Ok(RunTrace {
            seed,
            records,
            status: RunStatus::Diverged {
                iteration,
                reason: e.to_string(),
            },
        })
    };

    for k in 0..=t_max {
        let mut rng = iteration_rng(seed, k as u64);
        let eval = match evaluate_batch(problem, &theta, &mut rng) {
            Ok(e) => e,
            Err(e) => return diverged(records, k, e),
        };
        if eval.overflow {
            records.push(IterRecord {
                k,
                theta,
                estimate: eval.estimate,
                r_hat: f64::INFINITY,
                grad_norm: f64::INFINITY,
                weight_overflow: true,
                floor_hit: eval.floor_hit,
            });
            return diverged(records, k, Error::WeightOverflow(f64::INFINITY));
        }
        let grad_norm = eval.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        let next = if k < t_max {
            Some(optimizer.clone().step(&theta, &eval.gradient))
        } else {
            None
        };
        records.push(IterRecord {
            k,
            theta: theta.clone(),
            estimate: eval.estimate,
            r_hat: eval.r_hat,
            grad_norm,
            weight_overflow: false,
            floor_hit: eval.floor_hit,
        });
        match next {
            Some(Ok((state, th))) => {
                optimizer = state;
                theta = th;
            }
            Some(Err(e)) => return diverged(records, k + 1, e),
            None => {}
        }
    }
    Ok(RunTrace {
        seed,
        records,
        status: RunStatus::Completed,
    })
}

/// Iterations at which run summaries keep a parameter snapshot: 0 and the
/// 1-2-5 sequence up to `t_max`, plus `t_max` itself.
pub fn snapshot_iterations(t_max: usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut decade = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let k = m * decade;
            if k > t_max {
                break 'outer;
            }
            out.push(k);
        }
        decade *= 10;
    }
    if *out.last().unwrap() != t_max {
        out.push(t_max);
    }
    out
}

/// Condensed record of one run inside a multi-run sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub index: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub final_theta: ParamVector,
    pub final_estimate: f64,
    pub final_r_hat: f64,
    pub snapshots: Vec<(usize, ParamVector)>,
}

/// Per-iteration mean squared error over completed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub truth: f64,
    pub mse: Vec<f64>,
    /// Completed runs entering the MSE.
    pub run_count: usize,
    pub n_particles: usize,
    /// Estimates of each completed run, in run-index order.
    pub estimates: Vec<Vec<f64>>,
    pub diverged_runs: usize,
    pub runs: Vec<RunSummary>,
}

impl MseCurve {
    /// Builds the curve from per-run estimate sequences of equal length.
    pub fn from_estimates(
        truth: f64,
        n_particles: usize,
        estimates: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !truth.is_finite() {
            return Err(Error::Config(format!("truth must be finite, got {truth}")));
        }
        let len = estimates.first().map(Vec::len).unwrap_or(0);
        for e in &estimates {
            check_len(len, e.len())?;
        }
        let r = estimates.len();
        let mse = (0..len)
            .map(|k| {
                if r == 0 {
                    return f64::NAN;
                }
                estimates
                    .iter()
                    .map(|e| (e[k] - truth).powi(2))
                    .sum::<f64>()
                    / r as f64
            })
            .collect();
        Ok(Self {
            truth,
            mse,
            run_count: r,
            n_particles,
            estimates,
            diverged_runs: 0,
            runs: Vec::new(),
        })
    }

    pub fn completed_runs(&self) -> usize {
        self.run_count
    }

    pub fn total_runs(&self) -> usize {
        self.run_count + self.diverged_runs
    }
}

/// Runs `runs` independent loops with seeds `derive_seed(master_seed, i)`
/// and reduces their estimates to an MSE curve against `truth`.
///
/// Runs execute on the ambient rayon pool; the result does not depend on
/// the number of threads. Diverged runs are excluded and counted.
pub fn run_mse(
    problem: &OaisProblem,
    runs: usize,
    truth: f64,
    master_seed: u64,
) -> Result<MseCurve> {
    if runs < 2 {
        return Err(Error::Config(format!(
            "runs must be at least 2, got {runs}"
        )));
    }
    if !truth.is_finite() {
        return Err(Error::Config(format!("truth must be finite, got {truth}")));
    }
    problem.validate()?;
    let snaps = snapshot_iterations(problem.iterations);
    let outcomes: Vec<(RunSummary, Vec<f64>)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            let trace = run_oais(problem, seed)?;
            let last = trace.records.last();
            let summary = RunSummary {
                index: i,
                seed,
                status: trace.status.clone(),
                final_theta: last
                    .map(|r| r.theta.clone())
                    .unwrap_or_else(|| problem.theta0.clone()),
                final_estimate: last.map(|r| r.estimate).unwrap_or(f64::NAN),
                final_r_hat: last.map(|r| r.r_hat).unwrap_or(f64::NAN),
                snapshots: snaps
                    .iter()
                    .filter_map(|&k| trace.records.get(k).map(|r| (k, r.theta.clone())))
                    .collect(),
            };
            let estimates = trace.records.iter().map(|r| r.estimate).collect();
            Ok((summary, estimates))
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::with_capacity(runs);
    let mut estimates = Vec::new();
    let mut diverged = 0;
    for (summary, est) in outcomes {
        if summary.status.is_completed() {
            estimates.push(est);
        } else {
            diverged += 1;
        }
        summaries.push(summary);
    }
    let mut curve = MseCurve::from_estimates(truth, problem.n_particles, estimates)?;
    if curve.run_count == 0 {
        curve.mse = vec![f64::NAN; problem.iterations + 1];
    }
    curve.diverged_runs = diverged;
    curve.runs = summaries;
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Schedule;
    use crate::proposals::{GaussianProposalParams, ProposalParams};
    use crate::targets::{make_experiment_target, GaussianSpec};

    fn optimum_problem(optimizer: OptimizerSpec, iterations: usize) -> OaisProblem {
        let target = make_experiment_target("gaussian").unwrap();
        let family = ProposalFamily::gaussian(2);
        let theta0 = family
            .pack(&ProposalParams::Gaussian(
                GaussianProposalParams::from_covariance(vec![1.0, -1.0], &[2.0, -0.5, -0.5, 2.0])
                    .unwrap(),
            ))
            .unwrap();
        OaisProblem {
            target,
            family,
            theta0,
            phi: TestFunction::indicator(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            optimizer,
            n_particles: 200,
            iterations,
        }
    }

    fn adam() -> OptimizerSpec {
        OptimizerSpec::Adam {
            schedule: Schedule::Constant(0.01),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(42, 0), derive_seed(42, 0));
        assert_ne!(derive_seed(42, 0), derive_seed(42, 1));
        assert_ne!(derive_seed(42, 0), derive_seed(43, 0));
        // adding runs never perturbs existing ones
        let a: Vec<u64> = (0..5).map(|i| derive_seed(7, i)).collect();
        let b: Vec<u64> = (0..10).map(|i| derive_seed(7, i)).collect();
        assert_eq!(&b[..5], &a[..]);
    }

    #[test]
    fn zero_iterations_is_plain_snis() {
        let p = optimum_problem(adam(), 0);
        let trace = run_oais(&p, 3).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.status, RunStatus::Completed);
        assert_eq!(trace.records[0].theta, p.theta0);
    }

    #[test]
    fn starting_at_optimum_has_unit_r_hat() {
        for opt in [
            adam(),
            OptimizerSpec::AdaGrad {
                schedule: Schedule::Constant(0.1),
                eps: 1e-8,
            },
        ] {
            let trace = run_oais(&optimum_problem(opt, 0), 11).unwrap();
            let r = &trace.records[0];
            assert!((r.r_hat - 1.0).abs() < 1e-12);
            assert!(r.grad_norm < 1.0);
        }
    }

    #[test]
    fn completed_runs_have_t_plus_one_records() {
        let trace = run_oais(&optimum_problem(adam(), 25), 5).unwrap();
        assert_eq!(trace.records.len(), 26);
        for (k, r) in trace.records.iter().enumerate() {
            assert_eq!(r.k, k);
            assert!((0.0..=1.0).contains(&r.estimate));
        }
    }

    #[test]
    fn invalid_problem_is_config_error() {
        let mut p = optimum_problem(adam(), 5);
        p.n_particles = 0;
        assert!(matches!(run_oais(&p, 0), Err(Error::Config(_))));
        let mut p = optimum_problem(adam(), 5);
        p.family = ProposalFamily::Beta;
        p.theta0 = ParamVector::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(run_oais(&p, 0), Err(Error::Config(_))));
    }

    #[test]
    fn overflow_marks_divergence() {
        // narrow proposal far from a wide target: ln W explodes in the tails
        let target = Target::custom(1, Support::Real, None, |x| 1e3 - 0.5 * x[0] * x[0] * 1e-6);
        let p = OaisProblem {
            target,
            family: ProposalFamily::gaussian_mean(&[1.0]).unwrap(),
            theta0: ParamVector::new(vec![0.0]).unwrap(),
            phi: TestFunction::indicator(vec![-1.0], vec![1.0]).unwrap(),
            optimizer: adam(),
            n_particles: 10,
            iterations: 5,
        };
        let trace = run_oais(&p, 0).unwrap();
        assert!(matches!(
            trace.status,
            RunStatus::Diverged { iteration: 0, .. }
        ));
        assert_eq!(trace.records.len(), 1);
        assert!(trace.records[0].weight_overflow);
        assert!((0.0..=1.0).contains(&trace.records[0].estimate));
    }

    #[test]
    fn snapshot_schedule() {
        assert_eq!(snapshot_iterations(0), vec![0]);
        assert_eq!(snapshot_iterations(12), vec![0, 1, 2, 5, 10, 12]);
        assert_eq!(snapshot_iterations(100), vec![0, 1, 2, 5, 10, 20, 50, 100]);
    }

    #[test]
    fn mse_definition() {
        let c = MseCurve::from_estimates(0.5, 10, vec![vec![0.5, 0.7], vec![0.5, 0.1]]).unwrap();
        assert_eq!(c.mse[0], 0.0);
        let expected = ((0.7f64 - 0.5).powi(2) + (0.1f64 - 0.5).powi(2)) / 2.0;
        assert!((c.mse[1] - expected).abs() < 1e-15);
        let flat = MseCurve::from_estimates(0.25, 10, vec![vec![0.25; 50]; 4]).unwrap();
        assert!(flat.mse.iter().all(|m| *m == 0.0));
        assert!(MseCurve::from_estimates(0.0, 1, vec![vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn run_mse_requires_two_runs() {
        let p = optimum_problem(adam(), 3);
        assert!(matches!(run_mse(&p, 1, 0.1, 0), Err(Error::Config(_))));
        assert!(matches!(run_mse(&p, 3, f64::NAN, 0), Err(Error::Config(_))));
    }

    #[test]
    fn mean_only_family_runs() {
        let p = OaisProblem {
            target: Target::gaussian(GaussianSpec::standard(1)),
            family: ProposalFamily::gaussian_mean(&[1.0]).unwrap(),
            theta0: ParamVector::new(vec![2.0]).unwrap(),
            phi: TestFunction::indicator(vec![-1.0], vec![1.0]).unwrap(),
            optimizer: adam(),
            n_particles: 200,
            iterations: 2000,
        };
        let trace = run_oais(&p, 9).unwrap();
        assert!(trace.status.is_completed());
        assert!(trace.last().unwrap().theta[0].abs() < 0.5);
    }
}
