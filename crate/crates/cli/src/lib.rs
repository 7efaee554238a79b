//! Configuration-driven experiment runner for the optdec solvers.
//!
//! A run reads a JSON [`config::RunConfig`], executes the pipeline and writes
//! a per-iteration trace CSV plus a JSON summary, both named by the config hash.

use std::path::Path;

use optdec_core::trace::RunTrace;

pub mod config;
pub mod runner;
pub mod sweep;

pub use config::RunConfig;
pub use runner::{execute, gen_topology, run_to_dir};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run failed: {message}")]
    Runtime {
        message: String,
        trace: Option<Box<RunTrace>>,
    },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime { .. } | CliError::Io(_) => 3,
        }
    }
}

/// Output directory: `OPTDEC_OUT` when set, else the flag, else `out`.
pub fn output_dir(flag: Option<&Path>) -> std::path::PathBuf {
    match std::env::var_os("OPTDEC_OUT") {
        Some(v) if !v.is_empty() => v.into(),
        _ => flag.map(Path::to_path_buf).unwrap_or_else(|| "out".into()),
    }
}
