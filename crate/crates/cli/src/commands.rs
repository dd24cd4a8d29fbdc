//! The four subcommands. Each one validates its whole configuration before
//! it writes anything.

use std::path::{Path, PathBuf};
use std::time::Instant;

use adaoais_core::montecarlo::{batch_scores, importance_weights};
use adaoais_core::oais::derive_seed;
use adaoais_core::oracle::{compute_fixtures, fd_gradient, grad_r_oracle, rho_oracle};
use adaoais_core::proposals::BetaProposalParams;
use adaoais_core::{
    run_mse, run_oais, OaisProblem, ParamVector, ProposalFamily, ProposalParams, RunStatus, Target,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::output::{self, MseSummaryFile, RunReport, RunSummaryFile};
use crate::plot::{Chart, Series, PALETTE};
use crate::{CliError, EXIT_DIVERGED, EXIT_GRADCHECK_FAILED};

/// Command-line settings that sit outside the configuration document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub thin: Option<usize>,
    pub force: bool,
}

/// What a command did.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub exit_code: i32,
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

const DEFAULT_OUT: &str = "out";
pub const FIXTURE_FILE: &str = "fixtures.json";

fn out_dir(config: Option<&ExperimentConfig>, opts: &Options) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| config.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn finish(
    dir: &Path,
    files: Vec<(String, String)>,
    exit_code: i32,
    mut lines: Vec<String>,
) -> Result<Report, CliError> {
    output::write_all(dir, &files)?;
    let paths: Vec<PathBuf> = files.iter().map(|(n, _)| dir.join(n)).collect();
    lines.extend(paths.iter().map(|p| format!("wrote {}", p.display())));
    Ok(Report {
        exit_code,
        lines,
        files: paths,
    })
}

/// `ρ(θ_T)` for a completed run, when an oracle exists for the pair.
fn final_rho(problem: &OaisProblem, status: &RunStatus, theta: &ParamVector) -> Option<f64> {
    if !status.is_completed() {
        return None;
    }
    rho_oracle(&problem.target, &problem.family, theta).ok()
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}

/// `adaoais run`: one trace CSV per run, a summary JSON and a parameter plot.
pub fn cmd_run(config: &ExperimentConfig, opts: &Options) -> Result<Report, CliError> {
    let problem = config.to_problem()?;
    let thin = opts.thin.unwrap_or(config.thin);
    if thin == 0 {
        return Err(CliError::Config("`thin` must be at least 1".into()));
    }
    let master = opts.seed.unwrap_or(config.seed);
    let dir = out_dir(Some(config), opts);
    let started = Instant::now();

    let traces = (0..config.runs)
        .into_par_iter()
        .map(|i| {
            let t0 = Instant::now();
            let trace = run_oais(&problem, derive_seed(master, i as u64))?;
            let secs = t0.elapsed().as_secs_f64();
            let rho = trace
                .last()
                .and_then(|r| final_rho(&problem, &trace.status, &r.theta));
            Ok((trace, secs, rho))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let family = &problem.family;
    let mut files = Vec::new();
    let mut reports = Vec::new();
    for (i, (trace, secs, rho)) in traces.iter().enumerate() {
        files.push((
            format!("{}_run{i:03}.csv", config.name),
            output::trace_csv(trace, family, thin)?,
        ));
        let last = trace.last();
        let theta = last
            .map(|r| r.theta.clone())
            .unwrap_or_else(|| problem.theta0.clone());
        reports.push(RunReport {
            run: i,
            seed: trace.seed,
            status: trace.status.to_string(),
            final_estimate: last.map_or(f64::NAN, |r| r.estimate),
            final_r_hat: last.map_or(f64::NAN, |r| r.r_hat),
            final_rho: *rho,
            final_params: output::named_params(family, &family.reported_values(&theta)?),
            wall_time_s: *secs,
        });
    }
    let diverged = traces
        .iter()
        .filter(|(t, _, _)| !t.status.is_completed())
        .count();
    let summary = RunSummaryFile {
        name: config.name.clone(),
        optimizer: problem.optimizer.name().into(),
        n_particles: problem.n_particles,
        iterations: problem.iterations,
        master_seed: master,
        completed_runs: traces.len() - diverged,
        diverged_runs: diverged,
        wall_time_s: started.elapsed().as_secs_f64(),
        runs: reports,
    };
    files.push((
        format!("{}_summary.json", config.name),
        output::to_json(&summary)?,
    ));
    files.push((
        format!("{}_params.svg", config.name),
        params_chart(config, family, &traces)?.to_svg(),
    ));

    let lines = vec![format!(
        "{}: {} of {} runs completed, {diverged} diverged",
        config.name,
        traces.len() - diverged,
        traces.len()
    )];
    finish(
        &dir,
        files,
        if diverged == 0 { 0 } else { EXIT_DIVERGED },
        lines,
    )
}

fn params_chart(
    config: &ExperimentConfig,
    family: &ProposalFamily,
    traces: &[(adaoais_core::RunTrace, f64, Option<f64>)],
) -> Result<Chart, CliError> {
    let cols = family.param_columns();
    let mut chart = Chart::new(
        &format!("{}: proposal parameters", config.name),
        "iteration",
        "value",
    );
    for (c, name) in cols.iter().enumerate() {
        // symmetric covariance: the upper entry repeats the lower one
        if name.starts_with("sigma_") && name.as_bytes()[6] < name.as_bytes()[7] {
            continue;
        }
        let color = PALETTE[c % PALETTE.len()];
        for (r, (trace, _, _)) in traces.iter().enumerate() {
            let pts = trace
                .records
                .iter()
                .map(|rec| Ok((rec.k as f64, family.reported_values(&rec.theta)?[c])))
                .collect::<Result<Vec<_>, CliError>>()?;
            let s = Series::new(name.clone(), pts, color);
            chart.series.push(if r == 0 { s } else { s.faint(0.45) });
        }
    }
    Ok(chart)
}

/// Builds the MSE chart from an MSE CSV, with the `1/N` reference line.
pub fn mse_chart_from_csv(csv: &str, title: &str, n_particles: usize) -> Result<Chart, CliError> {
    let pts = output::read_mse_csv(csv)?;
    let mut chart = Chart::new(title, "iteration", "MSE");
    chart.log_y = true;
    let (x0, x1) = (
        pts.first().map_or(0.0, |p| p.0),
        pts.last().map_or(1.0, |p| p.0),
    );
    let reference = 1.0 / n_particles as f64;
    chart.series.push(Series::new("MSE", pts, PALETTE[0]));
    chart
        .series
        .push(Series::new("1/N", vec![(x0, reference), (x1, reference)], "#000000").dashed());
    Ok(chart)
}

/// `adaoais mse`: MSE CSV against the frozen fixture, a summary JSON and
/// plots.
pub fn cmd_mse(config: &ExperimentConfig, opts: &Options) -> Result<Report, CliError> {
    let problem = config.to_problem()?;
    let thin = opts.thin.unwrap_or(config.thin);
    if thin == 0 {
        return Err(CliError::Config("`thin` must be at least 1".into()));
    }
    if config.runs < 2 {
        return Err(CliError::Config(
            "`runs` must be at least 2 for an MSE curve".into(),
        ));
    }
    let dir = out_dir(Some(config), opts);
    let key = config.truth_key()?;
    let fixtures = output::read_fixtures(&dir.join(FIXTURE_FILE))?;
    let truth = fixtures
        .get(&key)
        .ok_or_else(|| {
            CliError::MissingFixture(format!(
                "fixture {key:?} not found in {}; run `adaoais fixtures` first",
                dir.join(FIXTURE_FILE).display()
            ))
        })?
        .truth;
    let master = opts.seed.unwrap_or(config.seed);

    let started = Instant::now();
    let curve = run_mse(&problem, config.runs, truth, master)?;
    let wall = started.elapsed().as_secs_f64();

    let family = &problem.family;
    let completed: Vec<_> = curve
        .runs
        .iter()
        .filter(|r| r.status.is_completed())
        .collect();
    let mean = |f: &dyn Fn(&adaoais_core::oais::RunSummary) -> f64| {
        completed.iter().map(|r| f(r)).sum::<f64>() / completed.len() as f64
    };
    let runs = curve
        .runs
        .par_iter()
        .map(|r| {
            Ok(RunReport {
                run: r.index,
                seed: r.seed,
                status: r.status.to_string(),
                final_estimate: r.final_estimate,
                final_r_hat: r.final_r_hat,
                final_rho: final_rho(&problem, &r.status, &r.final_theta),
                final_params: output::named_params(
                    family,
                    &family.reported_values(&r.final_theta)?,
                ),
                wall_time_s: f64::NAN,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let summary = MseSummaryFile {
        name: config.name.clone(),
        optimizer: problem.optimizer.name().into(),
        truth,
        n_particles: problem.n_particles,
        iterations: problem.iterations,
        master_seed: master,
        completed_runs: curve.completed_runs(),
        diverged_runs: curve.diverged_runs,
        final_mse: curve.mse.last().copied().unwrap_or(f64::NAN),
        final_mean_estimate: mean(&|r| r.final_estimate),
        final_mean_r_hat: mean(&|r| r.final_r_hat),
        final_mean_rho: mean_of(runs.iter().filter_map(|r| r.final_rho)),
        wall_time_s: wall,
        runs,
    };

    let csv = output::mse_csv(&curve, thin);
    let chart = mse_chart_from_csv(
        &csv,
        &format!("{}: MSE over {} runs", config.name, curve.run_count),
        problem.n_particles,
    )?;
    let mut files = vec![
        (format!("{}_mse.csv", config.name), csv),
        (format!("{}_mse.svg", config.name), chart.to_svg()),
        (
            format!("{}_mse_summary.json", config.name),
            output::to_json(&summary)?,
        ),
    ];
    if *family == ProposalFamily::Beta {
        files.push((
            format!("{}_proposals.svg", config.name),
            proposals_chart(config, &problem.target, &curve)?.to_svg(),
        ));
    }
    let lines = vec![format!(
        "{}: final MSE {:.4e} (1/N = {:.4e}), mean final estimate {:.6} vs truth {truth:.6}, {} of {} runs used",
        config.name,
        summary.final_mse,
        1.0 / problem.n_particles as f64,
        summary.final_mean_estimate,
        curve.completed_runs(),
        curve.total_runs()
    )];
    finish(
        &dir,
        files,
        if curve.diverged_runs == 0 {
            0
        } else {
            EXIT_DIVERGED
        },
        lines,
    )
}

/// Beta proposals with `(α, β)` averaged over completed runs at the snapshot
/// iterations, against the target density.
fn proposals_chart(
    config: &ExperimentConfig,
    target: &Target,
    curve: &adaoais_core::MseCurve,
) -> Result<Chart, CliError> {
    let family = ProposalFamily::Beta;
    let grid: Vec<f64> = (1..400).map(|i| i as f64 / 400.0).collect();
    let mut chart = Chart::new(
        &format!("{}: averaged proposals", config.name),
        "x",
        "density",
    );
    let completed: Vec<_> = curve
        .runs
        .iter()
        .filter(|r| r.status.is_completed())
        .collect();
    let Some(first) = completed.first() else {
        return Ok(chart);
    };
    for (c, (k, _)) in first.snapshots.iter().enumerate() {
        let mut sums = [0.0, 0.0];
        for r in &completed {
            let v = family.reported_values(&r.snapshots[c].1)?;
            sums[0] += v[0];
            sums[1] += v[1];
        }
        let n = completed.len() as f64;
        let params = BetaProposalParams::from_shape(sums[0] / n, sums[1] / n)?;
        let theta = family.pack(&ProposalParams::Beta(params))?;
        let q = family.prepare(&theta)?;
        let pts = grid
            .iter()
            .map(|x| Ok((*x, q.log_density(&[*x])?.exp())))
            .collect::<Result<Vec<_>, CliError>>()?;
        chart.series.push(Series::new(
            format!("k = {k}"),
            pts,
            PALETTE[c % PALETTE.len()],
        ));
    }
    let z = target.log_norm_const().unwrap_or(0.0);
    let pts = grid
        .iter()
        .map(|x| Ok((*x, (target.log_unnorm_density(&[*x])? - z).exp())))
        .collect::<Result<Vec<_>, CliError>>()?;
    chart
        .series
        .push(Series::new("target", pts, "#000000").dashed());
    Ok(chart)
}

/// `adaoais fixtures`: computes and freezes the ground-truth probabilities.
pub fn cmd_fixtures(opts: &Options, config: Option<&ExperimentConfig>) -> Result<Report, CliError> {
    let dir = out_dir(config, opts);
    let path = dir.join(FIXTURE_FILE);
    if path.exists() && !opts.force {
        return Err(CliError::Refused(path));
    }
    let fixtures = compute_fixtures()?;
    let lines = fixtures
        .iter()
        .map(|(k, f)| format!("{k}: {:.16} ({}, {} nodes)", f.truth, f.generator, f.nodes))
        .collect();
    finish(
        &dir,
        vec![(FIXTURE_FILE.into(), output::fixtures_json(&fixtures)?)],
        0,
        lines,
    )
}

/// Monte Carlo gradient against the oracle gradient, per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub samples: usize,
    pub mc_mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub oracle: Vec<f64>,
    pub z: Vec<f64>,
    /// Largest `|score − FD(log_density)|` over the checked points.
    pub score_fd_error: f64,
}

/// Largest |z| allowed by `gradcheck`.
pub const Z_LIMIT: f64 = 4.0;
/// Largest score/finite-difference disagreement allowed by `gradcheck`.
pub const SCORE_FD_TOL: f64 = 1e-5;

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.z.iter().all(|z| z.abs() < Z_LIMIT) && self.score_fd_error < SCORE_FD_TOL
    }
}

/// Draws `samples` points from the configured proposal and compares the mean
/// of `−W² ∇ln q` with the oracle gradient of `R`.
pub fn gradcheck(config: &ExperimentConfig, seed: u64) -> Result<GradcheckReport, CliError> {
    let target = config.build_target()?;
    let family = config.build_family()?;
    let theta = config.build_theta0(&family)?;
    let oracle = grad_r_oracle(&target, &family, &theta)?;
    let n = config.samples;
    let p = family.param_len();

    let q = family.prepare(&theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = q.sample(&mut rng, n);
    let w = importance_weights(&target, &family, &theta, &pts)?;
    let scores = batch_scores(&q, &pts)?;
    let mut sum = vec![0.0; p];
    let mut sq = vec![0.0; p];
    for (wi, s) in w.iter().zip(scores.chunks_exact(p)) {
        for j in 0..p {
            let g = -wi * wi * s[j];
            sum[j] += g;
            sq[j] += g * g;
        }
    }
    let nf = n as f64;
    let mc_mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std_err: Vec<f64> = (0..p)
        .map(|j| {
            let var = (sq[j] / nf - mc_mean[j] * mc_mean[j]).max(0.0) * nf / (nf - 1.0).max(1.0);
            (var / nf).sqrt()
        })
        .collect();
    let z = (0..p)
        .map(|j| {
            let d = mc_mean[j] - oracle[j];
            if std_err[j] > 0.0 {
                d / std_err[j]
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let mut score_fd_error: f64 = 0.0;
    for x in pts.iter().take(8) {
        let exact = family.score(&theta, x)?;
        let fd = fd_gradient(
            |t| {
                ParamVector::new(t.to_vec())
                    .and_then(|t| family.log_density(&t, x))
                    .unwrap_or(f64::NAN)
            },
            &theta,
            1e-5,
        )?;
        for (a, b) in exact.iter().zip(&fd) {
            score_fd_error = score_fd_error.max((a - b).abs());
        }
    }

    Ok(GradcheckReport {
        samples: n,
        mc_mean,
        std_err,
        oracle,
        z,
        score_fd_error,
    })
}

/// `adaoais gradcheck`: prints per-coordinate z-scores; fails when any
/// `|z| ≥ 4` or the score disagrees with finite differences.
pub fn cmd_gradcheck(config: &ExperimentConfig, opts: &Options) -> Result<Report, CliError> {
    let seed = opts.seed.unwrap_or(config.seed);
    let r = gradcheck(config, seed)?;
    let family = config.build_family()?;
    let names: Vec<String> = match family {
        ProposalFamily::Beta => vec!["ln_alpha".into(), "ln_beta".into()],
        _ => (0..family.param_len())
            .map(|j| format!("theta_{j}"))
            .collect(),
    };
    let mut lines = vec![format!(
        "{}: {} samples, seed {seed}",
        config.name, r.samples
    )];
    for (j, name) in names.iter().enumerate().take(r.z.len()) {
        lines.push(format!(
            "  {:<9} mc {:+.6e} ± {:.3e}  oracle {:+.6e}  z {:+.3}",
            name, r.mc_mean[j], r.std_err[j], r.oracle[j], r.z[j]
        ));
    }
    lines.push(format!(
        "  score vs finite differences: max abs error {:.2e}",
        r.score_fd_error
    ));
    let passed = r.passed();
    lines.push(if passed { "PASS".into() } else { "FAIL".into() });
    Ok(Report {
        exit_code: if passed { 0 } else { EXIT_GRADCHECK_FAILED },
        lines,
        files: Vec::new(),
    })
}
