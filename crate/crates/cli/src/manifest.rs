//! Run provenance. Timestamps live only here, never in data files, so the
//! data of a rerun can be compared byte for byte.

use std::path::Path;

use pognac_core::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::experiment::Experiment;
use crate::output::OutputDigest;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub seed: u64,
    /// The effective configuration after command-line overrides, as TOML.
    pub config: String,
    pub invocation: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn config(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig::from_toml_str(&self.config)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Manifest {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes infallibly");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    /// Files whose digest differs from `other`, or that either side lacks.
    pub fn differing_outputs(&self, other: &[OutputDigest]) -> Vec<String> {
        let mut bad: Vec<String> = self
            .outputs
            .iter()
            .filter(|o| !other.contains(o))
            .map(|o| o.file.clone())
            .collect();
        for o in other {
            if !self.outputs.iter().any(|m| m.file == o.file) {
                bad.push(o.file.clone());
            }
        }
        bad
    }
}

/// Runs `experiment` into `out` and records a manifest beside its outputs.
pub fn run_recorded(
    experiment: &Experiment,
    cfg: &ExperimentConfig,
    out: &Path,
    invocation: Vec<String>,
) -> Result<RunManifest> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let outputs = experiment.execute(cfg, out)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: experiment.clone(),
        seed: cfg.seed,
        config: cfg.to_toml_string()?,
        invocation,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs,
    };
    manifest.save(out)?;
    Ok(manifest)
}

/// Re-executes a recorded run into `out` and checks every digest.
pub fn rerun(manifest_path: &Path, out: &Path, invocation: Vec<String>) -> Result<RunManifest> {
    let old = RunManifest::load(manifest_path)?;
    let cfg = old.config()?;
    let new = run_recorded(&old.experiment, &cfg, out, invocation)?;
    let bad = old.differing_outputs(&new.outputs);
    if bad.is_empty() {
        Ok(new)
    } else {
        Err(CliError::Mismatch(bad))
    }
}
