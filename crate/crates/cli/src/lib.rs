//! Configuration, presets and commands behind the `adaoais` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::path::{Path, PathBuf};

pub use commands::{
    cmd_fixtures, cmd_gradcheck, cmd_mse, cmd_run, gradcheck, GradcheckReport, Options, Report,
};
pub use config::{parse_config, preset_config, ExperimentConfig, PRESETS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    MissingFixture(String),
    #[error("refusing to overwrite {0}; pass --force to replace it")]
    Refused(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] adaoais_core::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::MissingFixture(_) => 2,
            Self::Refused(_) => 3,
            Self::Io { .. } | Self::Json(_) | Self::Core(_) => 1,
        }
    }
}

/// Exit code when some runs diverged; their outputs are still written.
pub const EXIT_DIVERGED: i32 = 4;
/// Exit code when a gradient check fails.
pub const EXIT_GRADCHECK_FAILED: i32 = 5;
