//! Result-file writers: CSV for plotting, JSON for full fidelity, and a
//! manifest sufficient to regenerate both byte-for-byte.

use std::fs;
use std::path::{Path, PathBuf};

use otfs_aircomp::{SweepConfig, SweepResult};
use serde::{Deserialize, Serialize};

use crate::config::CliError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Everything needed to reproduce a result set: the fully-resolved config
/// (including the master seed) plus bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub created_utc: String,
    pub command: String,
    pub preset: Option<String>,
    pub scale: String,
    pub master_seed: u64,
    pub resolved_config: SweepConfig,
    /// Power ratios, for ratio sweeps.
    pub ratios: Option<Vec<f64>>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        preset: Option<&str>,
        scale: &str,
        config: &SweepConfig,
        ratios: Option<Vec<f64>>,
        outputs: Vec<String>,
    ) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            created_utc: chrono::Utc::now().to_rfc3339(),
            command: command.to_string(),
            preset: preset.map(str::to_string),
            scale: scale.to_string(),
            master_seed: config.master_seed,
            resolved_config: config.clone(),
            ratios,
            outputs,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Write `results.csv`, `results.json` and `manifest.json` into `out_dir`.
/// Returns the paths written.
pub fn write_result_set(
    out_dir: &Path,
    result: &SweepResult,
    manifest: RunManifest,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("results.csv");
    let json_path = out_dir.join("results.json");
    let manifest_path = out_dir.join("manifest.json");
    write(&csv_path, &result.to_csv_string())?;
    let json = serde_json::to_string_pretty(result)
        .map_err(|e| CliError::Runtime(format!("serialize results: {e}")))?;
    write(&json_path, &json)?;
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(format!("serialize manifest: {e}")))?;
    write(&manifest_path, &manifest_json)?;
    Ok(vec![csv_path, json_path, manifest_path])
}
