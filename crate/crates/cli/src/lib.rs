//! Scenario runner for the `hybridlab` experiments.
//!
//! A scenario is addressed by name from a JSON [`ScenarioConfig`]; running it
//! yields a JSON report plus zero or more CSV artifacts.

pub mod config;
pub mod error;
mod scenarios;

use std::path::PathBuf;

pub use config::ScenarioConfig;
pub use error::{CliError, CliResult};
pub use scenarios::{catalog, ScenarioInfo};

/// Report and artifacts of one run, before anything touches the disk.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: serde_json::Value,
    /// `(file name, bytes)` in the order they were produced.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl RunOutcome {
    pub fn artifact(&self, name: &str) -> Option<&[u8]> {
        self.artifacts
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }
}

fn lookup(cfg: &ScenarioConfig) -> CliResult<&'static ScenarioInfo> {
    let info = catalog()
        .iter()
        .find(|s| s.name == cfg.name)
        .ok_or_else(|| CliError::Validation(format!("unknown scenario {:?}", cfg.name)))?;
    if let Some(m) = &cfg.module {
        if m != info.module {
            return Err(CliError::Validation(format!(
                "scenario {} belongs to {}, not {m}",
                info.name, info.module
            )));
        }
    }
    Ok(info)
}

/// Parses and checks parameters without running anything.
pub fn validate(cfg: &ScenarioConfig) -> CliResult<()> {
    let info = lookup(cfg)?;
    scenarios::dispatch(info.name, cfg, false).map(|_| ())
}

/// Runs a scenario in memory.
pub fn execute(cfg: &ScenarioConfig) -> CliResult<RunOutcome> {
    let info = lookup(cfg)?;
    scenarios::dispatch(info.name, cfg, true).map(|o| o.expect("run mode yields an outcome"))
}

/// Runs a scenario and writes `<name>.json` and its artifacts to the output directory.
pub fn run_to_disk(cfg: &ScenarioConfig) -> CliResult<(PathBuf, RunOutcome)> {
    let outcome = execute(cfg)?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    let mut text =
        serde_json::to_string_pretty(&outcome.report).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(dir.join(format!("{}.json", cfg.name)), text)?;
    for (name, bytes) in &outcome.artifacts {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok((dir, outcome))
}

/// Applies `HYBRIDLAB_THREADS` to the global thread pool.
pub fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("HYBRIDLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Validation(format!(
            "HYBRIDLAB_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))
}
