use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adaoais_cli::commands::mse_chart_from_csv;
use tempfile::TempDir;

fn adaoais(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaoais"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ADAOAIS_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().skip(1).collect()
}

#[test]
fn fixtures_are_written_once() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let first = adaoais(&out, &["fixtures"]);
    assert_eq!(
        code(&first),
        0,
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let json: serde_json::Value = serde_json::from_str(&read(out.join("fixtures.json"))).unwrap();
    let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["exp1", "exp2", "exp3"]);
    assert!((json["exp3"]["truth"].as_f64().unwrap() - 0.7280627847171512).abs() < 1e-12);

    let again = adaoais(&out, &["fixtures"]);
    assert_eq!(code(&again), 3);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    assert_eq!(code(&adaoais(&out, &["fixtures", "--force"])), 0);
}

#[test]
fn zero_iterations_give_a_single_row() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("zero.toml");
    fs::write(
        &cfg,
        "preset = \"smoke-gaussian\"\nname = \"zero\"\niterations = 0\nruns = 1\n",
    )
    .unwrap();
    let o = adaoais(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("zero_run000.csv"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("0,") && rows[0].ends_with(",completed"));
}

#[test]
fn traces_are_reproducible_across_reruns_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    for (out, jobs) in [(&a, "1"), (&b, "1"), (&c, "2")] {
        let o = adaoais(
            out,
            &[
                "run",
                "--preset",
                "smoke-gaussian",
                "--seed",
                "11",
                "--jobs",
                jobs,
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for i in 0..3 {
        let name = format!("smoke-gaussian_run{i:03}.csv");
        let reference = fs::read(a.join(&name)).unwrap();
        assert_eq!(reference, fs::read(b.join(&name)).unwrap());
        assert_eq!(reference, fs::read(c.join(&name)).unwrap());
    }
    assert_ne!(
        fs::read(a.join("smoke-gaussian_run000.csv")).unwrap(),
        fs::read(a.join("smoke-gaussian_run001.csv")).unwrap()
    );
}

#[test]
fn bad_configuration_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "preset = \"smoke-gaussian\"\nparticles = 10\n").unwrap();
    let out = dir.path().join("never");
    let o = adaoais(&out, &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());

    let o = adaoais(&out, &["run", "--preset", "no-such-preset"]);
    assert_eq!(code(&o), 2);
    let o = adaoais(&out, &["run", "--preset", "smoke-gaussian", "--thin", "0"]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn mse_needs_fixtures() {
    let dir = TempDir::new().unwrap();
    let o = adaoais(dir.path(), &["mse", "--preset", "smoke-gaussian"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("adaoais fixtures"));
}

#[test]
fn thinning_keeps_every_kth_row_and_the_last() {
    let dir = TempDir::new().unwrap();
    let o = adaoais(
        dir.path(),
        &["run", "--preset", "smoke-beta", "--thin", "10"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("smoke-beta_run000.csv"));
    let iters: Vec<&str> = data_rows(&csv)
        .iter()
        .map(|r| r.split(',').next().unwrap())
        .collect();
    assert_eq!(iters, ["0", "10", "20", "30", "40", "50"]);
    assert!(csv.starts_with("iter,estimate,R_hat,grad_norm,alpha,beta,status\n"));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_adaoais"))
        .args(["run", "--preset", "smoke-beta"])
        .env("ADAOAIS_OUT", &out)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("smoke-beta_summary.json").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn gradcheck_passes_in_one_dimension() {
    let dir = TempDir::new().unwrap();
    let o = adaoais(dir.path(), &["gradcheck", "--preset", "gradcheck-mean1d"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn mse_plot_regenerates_from_csv() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&adaoais(dir.path(), &["fixtures"])), 0);
    let o = adaoais(dir.path(), &["mse", "--preset", "smoke-gaussian"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("smoke-gaussian_mse.csv"));
    assert_eq!(data_rows(&csv).len(), 51);
    let chart = mse_chart_from_csv(&csv, "smoke-gaussian: MSE over 3 runs", 200).unwrap();
    assert_eq!(
        chart.to_svg(),
        read(dir.path().join("smoke-gaussian_mse.svg"))
    );

    let summary: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("smoke-gaussian_mse_summary.json"))).unwrap();
    assert_eq!(summary["completed_runs"], 3);
    let last: f64 = data_rows(&csv)
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(summary["final_mse"].as_f64().unwrap(), last);
}

#[test]
fn beta_mse_writes_the_proposal_plot() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&adaoais(dir.path(), &["fixtures"])), 0);
    let o = adaoais(dir.path(), &["mse", "--preset", "smoke-beta"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(dir.path().join("smoke-beta_proposals.svg")).starts_with("<svg"));
}
