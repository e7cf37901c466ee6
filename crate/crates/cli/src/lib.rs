//! Experiment runner behind the `bdeeponet` binary.

pub mod commands;
pub mod config;

use std::path::Path;

use anyhow::{anyhow, Result};

pub use config::{ExperimentConfig, Method};

/// Defaults, then the config file, then `--set key=value` pairs, then the
/// dedicated flags.
pub fn resolve_config(
    file: Option<&Path>,
    sets: &[String],
    method: Option<Method>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<ExperimentConfig> {
    let mut cfg = match file {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{s}`"))?;
        cfg.set(k, v)?;
    }
    if let Some(m) = method {
        cfg.method = m;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o.to_path_buf();
    }
    Ok(cfg)
}
