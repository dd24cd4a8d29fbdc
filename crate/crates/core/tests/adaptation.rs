use adaoais_core::montecarlo::experiment_test_function;
use adaoais_core::oais::{derive_seed, evaluate_batch, iteration_rng};
use adaoais_core::proposals::GaussianProposalParams;
use adaoais_core::targets::{experiment_target, ExperimentTarget};
use adaoais_core::{
    run_mse, run_oais, OaisProblem, OptimizerSpec, ProposalFamily, ProposalParams, Schedule,
};

fn exp1_problem(
    optimizer: OptimizerSpec,
    which: ExperimentTarget,
    n: usize,
    t: usize,
) -> OaisProblem {
    let family = ProposalFamily::gaussian(2);
    let p0 = GaussianProposalParams::from_covariance(vec![10.0, -10.0], &[40.0, 0.0, 0.0, 40.0])
        .unwrap();
    OaisProblem {
        target: experiment_target(which),
        theta0: family.pack(&ProposalParams::Gaussian(p0)).unwrap(),
        family,
        phi: experiment_test_function(which),
        optimizer,
        n_particles: n,
        iterations: t,
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

fn adagrad() -> OptimizerSpec {
    OptimizerSpec::AdaGrad {
        schedule: Schedule::Constant(0.1),
        eps: 1e-8,
    }
}

#[test]
fn runs_are_deterministic() {
    let p = exp1_problem(adam(), ExperimentTarget::Gaussian, 200, 300);
    let a = run_oais(&p, 42).unwrap();
    let b = run_oais(&p, 42).unwrap();
    assert_eq!(a, b);
    let c = run_oais(&p, 43).unwrap();
    assert_ne!(
        a.records.last().unwrap().theta,
        c.records.last().unwrap().theta
    );
}

#[test]
fn mse_is_independent_of_thread_count() {
    let p = exp1_problem(adagrad(), ExperimentTarget::Mixture, 100, 50);
    let with = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_mse(&p, 6, 0.015509654401751742, 9).unwrap())
    };
    let one = with(1);
    let three = with(3);
    assert_eq!(one, three);
    assert_eq!(one.completed_runs() + one.diverged_runs, 6);
}

#[test]
fn iterations_replay_from_their_parameters() {
    let p = exp1_problem(adam(), ExperimentTarget::Gaussian, 300, 200);
    let seed = derive_seed(5, 2);
    let trace = run_oais(&p, seed).unwrap();
    for k in [0usize, 1, 57, 200] {
        let rec = &trace.records[k];
        let eval = evaluate_batch(&p, &rec.theta, &mut iteration_rng(seed, k as u64)).unwrap();
        assert_eq!(eval.estimate, rec.estimate);
        assert_eq!(eval.r_hat, rec.r_hat);
    }
}

#[test]
fn records_stay_valid() {
    let p = exp1_problem(adagrad(), ExperimentTarget::Gaussian, 200, 500);
    let trace = run_oais(&p, 3).unwrap();
    assert!(trace.status.is_completed());
    assert_eq!(trace.records.len(), 501);
    for r in &trace.records {
        assert!((0.0..=1.0).contains(&r.estimate));
        p.family.unpack(&r.theta).unwrap();
        assert!(!r.floor_hit);
    }
}

fn window_medians(values: &[f64], window: usize) -> Vec<f64> {
    values
        .chunks_exact(window)
        .map(|w| {
            let mut v = w.to_vec();
            v.sort_by(f64::total_cmp);
            v[window / 2]
        })
        .collect()
}

#[test]
fn r_hat_medians_settle_downward() {
    for which in [ExperimentTarget::Gaussian, ExperimentTarget::Mixture] {
        let p = exp1_problem(adam(), which, 500, 6000);
        let trace = run_oais(&p, 11).unwrap();
        assert!(trace.status.is_completed());
        let r: Vec<f64> = trace.records.iter().map(|r| r.r_hat).collect();
        let med = window_medians(&r, 500);
        assert!(med.last().unwrap() < &med[0], "{med:?}");
        for pair in med[med.len() / 2..].windows(2) {
            assert!(pair[1] <= pair[0] * 1.05, "{which:?}: {med:?}");
        }
    }
}
