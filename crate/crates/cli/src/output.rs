//! CSV and JSON emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use adaoais_core::oracle::Fixture;
use adaoais_core::{MseCurve, ProposalFamily, RunTrace};
use serde::Serialize;

use crate::CliError;

/// Whether iteration `k` of a `len`-record series is written at thinning `thin`.
pub fn keep_row(k: usize, len: usize, thin: usize) -> bool {
    k.is_multiple_of(thin) || k + 1 == len
}

/// Trace CSV: `iter, estimate, R_hat, grad_norm, <params>, status`. The
/// status column is filled on the final row only.
pub fn trace_csv(
    trace: &RunTrace,
    family: &ProposalFamily,
    thin: usize,
) -> Result<String, CliError> {
    let mut out = String::from("iter,estimate,R_hat,grad_norm");
    for c in family.param_columns() {
        out.push(',');
        out.push_str(&c);
    }
    out.push_str(",status\n");
    let len = trace.records.len();
    for (i, r) in trace.records.iter().enumerate() {
        if !keep_row(i, len, thin) {
            continue;
        }
        write!(out, "{},{},{},{}", r.k, r.estimate, r.r_hat, r.grad_norm).unwrap();
        for v in family.reported_values(&r.theta)? {
            write!(out, ",{v}").unwrap();
        }
        out.push(',');
        if i + 1 == len {
            out.push_str(&trace.status.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

/// MSE CSV: `iter, mse, runs_used`.
pub fn mse_csv(curve: &MseCurve, thin: usize) -> String {
    let mut out = String::from("iter,mse,runs_used\n");
    let len = curve.mse.len();
    for (k, m) in curve.mse.iter().enumerate() {
        if keep_row(k, len, thin) {
            writeln!(out, "{k},{m},{}", curve.run_count).unwrap();
        }
    }
    out
}

/// Reads an MSE CSV back as `(iter, mse)` pairs.
pub fn read_mse_csv(text: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some("iter,mse,runs_used") {
        return Err(CliError::Config("not an MSE CSV (bad header)".into()));
    }
    lines
        .map(|l| {
            let mut f = l.split(',');
            let parse = |s: Option<&str>| {
                s.and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| CliError::Config(format!("bad MSE CSV row {l:?}")))
            };
            Ok((parse(f.next())?, parse(f.next())?))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub run: usize,
    pub seed: u64,
    pub status: String,
    pub final_estimate: f64,
    pub final_r_hat: f64,
    /// `ρ(θ_T)` by quadrature or closed form; null for diverged runs.
    pub final_rho: Option<f64>,
    pub final_params: BTreeMap<String, f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummaryFile {
    pub name: String,
    pub optimizer: String,
    pub n_particles: usize,
    pub iterations: usize,
    pub master_seed: u64,
    pub completed_runs: usize,
    pub diverged_runs: usize,
    pub wall_time_s: f64,
    pub runs: Vec<RunReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MseSummaryFile {
    pub name: String,
    pub optimizer: String,
    pub truth: f64,
    pub n_particles: usize,
    pub iterations: usize,
    pub master_seed: u64,
    pub completed_runs: usize,
    pub diverged_runs: usize,
    pub final_mse: f64,
    pub final_mean_estimate: f64,
    pub final_mean_r_hat: f64,
    pub final_mean_rho: Option<f64>,
    pub wall_time_s: f64,
    pub runs: Vec<RunReport>,
}

pub fn named_params(family: &ProposalFamily, values: &[f64]) -> BTreeMap<String, f64> {
    family
        .param_columns()
        .into_iter()
        .zip(values.iter().copied())
        .collect()
}

/// JSON with non-finite numbers written as `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn fixtures_json(fixtures: &BTreeMap<String, Fixture>) -> Result<String, CliError> {
    to_json(fixtures)
}

pub fn read_fixtures(path: &Path) -> Result<BTreeMap<String, Fixture>, CliError> {
    let text = fs::read_to_string(path).map_err(|_| {
        CliError::MissingFixture(format!(
            "no fixture file at {}; run `adaoais fixtures` with the same --out first",
            path.display()
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Writes every `(name, contents)` pair into `dir`, creating it.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, contents) in files {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}
