//! Library surface of the experiment CLI: config resolution, figure presets,
//! result writers, trend checks and the selftest suites. The binary in
//! `main.rs` is a thin wrapper over [`run_sweep`], [`run_figure`] and
//! [`run_selftest`].

pub mod config;
pub mod output;
pub mod presets;
pub mod selftest;
pub mod trend;

use std::path::Path;

use otfs_aircomp::{monte_carlo_sweep, power_ratio_sweep, SweepConfig, SweepResult};

use config::{classify, CliError, Overrides, Scale};
use output::{write_result_set, RunManifest};
use presets::FigurePreset;
use trend::{checks_for, render_report};

/// Resolve a sweep config and write the result set into `out_dir`.
pub fn run_sweep(
    config_path: Option<&Path>,
    out_dir: &Path,
    scale: Scale,
    overrides: &Overrides,
) -> Result<SweepResult, CliError> {
    let cfg = config::resolve_config(config_path, scale, overrides)?;
    let result = monte_carlo_sweep(&cfg).map_err(classify)?;
    let manifest = RunManifest::new(
        "sweep",
        None,
        scale.as_str(),
        &cfg,
        None,
        vec![
            "results.csv".into(),
            "results.json".into(),
            "manifest.json".into(),
        ],
    );
    write_result_set(out_dir, &result, manifest)?;
    Ok(result)
}

/// Outcome of a figure run: the sweep plus its trend verdicts.
pub struct FigureOutcome {
    pub result: SweepResult,
    pub report: String,
    pub all_passed: bool,
}

/// Run a figure preset, write results and the trend report, and evaluate the
/// figure's qualitative properties.
pub fn run_figure(
    preset: FigurePreset,
    out_dir: &Path,
    scale: Scale,
    overrides: &Overrides,
) -> Result<FigureOutcome, CliError> {
    let cfg = overrides.apply_to(preset.config(scale));
    cfg.validate().map_err(classify)?;
    let ratios = preset.ratios();
    let result = match &ratios {
        Some(r) => power_ratio_sweep(&cfg, r).map_err(classify)?,
        None => monte_carlo_sweep(&cfg).map_err(classify)?,
    };
    let manifest = RunManifest::new(
        "figure",
        Some(preset.name()),
        scale.as_str(),
        &cfg,
        ratios,
        vec![
            "results.csv".into(),
            "results.json".into(),
            "manifest.json".into(),
            "trend_report.txt".into(),
        ],
    );
    write_result_set(out_dir, &result, manifest)?;
    let checks = checks_for(preset, &result);
    let report = render_report(preset, &checks);
    std::fs::write(out_dir.join("trend_report.txt"), &report)
        .map_err(|e| CliError::Runtime(format!("cannot write trend report: {e}")))?;
    Ok(FigureOutcome {
        result,
        all_passed: checks.iter().all(|c| c.passed),
        report,
    })
}

/// Re-run the sweep recorded in a manifest (reproduction path).
pub fn rerun_from_manifest(manifest: &RunManifest) -> Result<SweepResult, CliError> {
    let cfg: SweepConfig = manifest.resolved_config.clone();
    cfg.validate().map_err(classify)?;
    match &manifest.ratios {
        Some(r) => power_ratio_sweep(&cfg, r).map_err(classify),
        None => monte_carlo_sweep(&cfg).map_err(classify),
    }
}

/// Run the selftest suites; returns the rendered table and overall verdict.
pub fn run_selftest() -> (String, bool) {
    let results = selftest::run_all();
    let mut table = format!(
        "{:<42} {:<32} {}\n",
        "suite", "tolerance", "status"
    );
    let mut all_ok = true;
    for r in &results {
        let status = match &r.error {
            None => "PASS".to_string(),
            Some(e) => {
                all_ok = false;
                format!("FAIL ({e})")
            }
        };
        table.push_str(&format!("{:<42} {:<32} {}\n", r.name, r.tolerance, status));
    }
    (table, all_ok)
}
