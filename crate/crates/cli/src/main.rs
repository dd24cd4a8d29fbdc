use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use adaoais_cli::config::{parse_config, ExperimentConfig};
use adaoais_cli::{cmd_fixtures, cmd_gradcheck, cmd_mse, cmd_run, CliError, Options, Report};
use clap::{Parser, Subcommand};

/// Adaptive importance sampling with Adam and AdaGrad proposal updates.
#[derive(Debug, Parser)]
#[command(name = "adaoais", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset (see README); a config file is layered on top.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "ADAOAIS_OUT")]
    out: Option<PathBuf>,
    /// Write every K-th iteration (first and last always kept).
    #[arg(long, global = true)]
    thin: Option<usize>,
    /// Replace an existing fixture file.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the adaptation loop and write per-run traces.
    Run,
    /// Run many seeds and write the MSE curve against the frozen truth.
    Mse,
    /// Compute and freeze ground-truth probabilities.
    Fixtures,
    /// Compare the Monte Carlo gradient of R with an oracle.
    Gradcheck,
}

fn load(cli: &Cli) -> Result<Option<ExperimentConfig>, CliError> {
    let text = match &cli.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| CliError::Io {
            path: p.clone(),
            source: e,
        })?),
        None => None,
    };
    match (text, cli.preset.as_deref()) {
        (None, None) => Ok(None),
        (text, preset) => parse_config(text.as_deref().unwrap_or(""), preset).map(Some),
    }
}

fn execute(cli: &Cli) -> Result<Report, CliError> {
    if cli.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    if cli.thin == Some(0) {
        return Err(CliError::Config("--thin must be at least 1".into()));
    }
    let config = load(cli)?;
    let opts = Options {
        out: cli.out.clone(),
        seed: cli.seed,
        thin: cli.thin,
        force: cli.force,
    };
    let required = || {
        config
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs --config or --preset".into()))
    };
    let run = || match cli.command {
        Command::Run => cmd_run(required()?, &opts),
        Command::Mse => cmd_mse(required()?, &opts),
        Command::Fixtures => cmd_fixtures(&opts, config.as_ref()),
        Command::Gradcheck => cmd_gradcheck(required()?, &opts),
    };
    match cli.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?
            .install(run),
        None => run(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("adaoais: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
