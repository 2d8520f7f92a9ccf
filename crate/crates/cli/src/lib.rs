//! Declarative experiment runner for `heatlab`: configs in, CSV/SVG reports out.

pub mod config;
pub mod ops;
pub mod runner;
pub mod suites;
pub mod svg;

pub use config::{ConfigError, ExperimentConfig};
pub use runner::{run, Report, RunOptions};

/// Budget from `HEATLAB_BUDGET`, then the config, then the library default.
pub fn resolve_budget(env: Option<&str>, config: Option<u64>) -> Result<u64, String> {
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("HEATLAB_BUDGET must be a non-negative integer, got `{v}`")),
        None => Ok(config.unwrap_or(heatlab::kernel::DEFAULT_BUDGET)),
    }
}
