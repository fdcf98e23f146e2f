//! Monte-Carlo benchmark harness for the MEEF-UKF family.

pub mod config;
pub mod diagnose;
pub mod metrics;
pub mod report;
pub mod runner;

use std::path::PathBuf;

pub use config::{builtin, builtin_names, parse_config, ConfigError, ModelId, ScenarioConfig};
pub use metrics::{rmse, RmseSeries};
pub use report::{emit_tables, Format};
pub use runner::{run_scenario, ResultBundle};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] meef_core::Error),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("environment: {0}")]
    Env(String),
    #[error("{0}")]
    Usage(String),
}

/// Resolves a built-in scenario name or reads a config file.
pub fn load_scenario(arg: &str) -> Result<ScenarioConfig, BenchError> {
    if let Some(cfg) = builtin(arg) {
        return Ok(cfg);
    }
    let path = PathBuf::from(arg);
    let text = std::fs::read_to_string(&path).map_err(|source| BenchError::Io { path: path.clone(), source })?;
    parse_config(&text).map_err(|e| {
        BenchError::Usage(format!("{}: {e}", path.display()))
    })
}
