//! Config-file grammar and resolution onto a full sweep description.
//!
//! Configs are TOML key-value files; every key is optional and unknown keys
//! are rejected. Missing keys fall back to the scale defaults (desk unless
//! `--scale full`), then command-line flags override the file.

use std::fmt;
use std::path::Path;

use otfs_aircomp::{DopplerMode, OffsetKind, OffsetSpec, SweepConfig, SweepScheme, SymbolModel};
use serde::{Deserialize, Serialize};

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed configuration (exit 1).
    Config(String),
    /// Structurally valid but infeasible parameters (exit 2).
    Infeasible(String),
    /// Simulation or I/O failure at run time (exit 3).
    Runtime(String),
    /// A figure's trend check did not hold (exit 4).
    TrendCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::TrendCheck(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible configuration: {m}"),
            CliError::Runtime(m) => write!(f, "runtime failure: {m}"),
            CliError::TrendCheck(m) => write!(f, "trend check failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub fn classify(err: otfs_aircomp::Error) -> CliError {
    match err {
        otfs_aircomp::Error::InfeasibleConfig(msg) => CliError::Infeasible(msg),
        other => CliError::Runtime(other.to_string()),
    }
}

/// Problem size family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// 16x16 grid, 3 sensors: every acceptance property at laptop cost.
    Desk,
    /// 64x64 grid, 6 sensors: the published operating point. Dense solves at
    /// this size cost seconds per trial, so trial counts default low.
    Full,
}

impl Scale {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        }
    }

    pub fn base_config(&self) -> SweepConfig {
        match self {
            Scale::Desk => SweepConfig::default(),
            Scale::Full => SweepConfig {
                delay_bins: 64,
                doppler_bins: 64,
                num_sensors: 6,
                num_paths: 3,
                max_delay_tap: 4,
                max_doppler_tap: 2,
                snr_grid_db: vec![0.0, 10.0, 20.0, 30.0],
                trials: 10,
                ..SweepConfig::default()
            },
        }
    }
}

/// On-disk configuration: every field optional, unknown keys rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub delay_bins: Option<usize>,
    pub doppler_bins: Option<usize>,
    pub num_sensors: Option<usize>,
    pub num_paths: Option<usize>,
    pub max_delay_tap: Option<usize>,
    pub max_doppler_tap: Option<i64>,
    pub mode: Option<DopplerMode>,
    pub rho: Option<f64>,
    pub pilot_snr_db: Option<f64>,
    pub data_pilot_ratio: Option<f64>,
    pub snr_grid_db: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub schemes: Option<Vec<SweepScheme>>,
    pub symbol_model: Option<SymbolModel>,
    pub master_seed: Option<u64>,
    pub workers: Option<usize>,
    pub offset: Option<OffsetFileSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetFileSpec {
    pub probability: f64,
    pub target: OffsetKind,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Overlay this file onto a scale's base configuration.
    pub fn apply_to(&self, mut cfg: SweepConfig) -> SweepConfig {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            };
        }
        take!(delay_bins);
        take!(doppler_bins);
        take!(num_sensors);
        take!(num_paths);
        take!(max_delay_tap);
        take!(max_doppler_tap);
        take!(mode);
        take!(rho);
        take!(pilot_snr_db);
        take!(data_pilot_ratio);
        take!(snr_grid_db);
        take!(trials);
        take!(schemes);
        take!(symbol_model);
        take!(master_seed);
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(o) = &self.offset {
            cfg.offset = Some(OffsetSpec {
                probability: o.probability,
                target: o.target,
            });
        }
        cfg
    }
}

/// Scheme selector exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SchemeArg {
    Robust,
    Nonrobust,
    Both,
}

impl SchemeArg {
    pub fn to_schemes(self) -> Vec<SweepScheme> {
        match self {
            SchemeArg::Robust => vec![SweepScheme::Robust],
            SchemeArg::Nonrobust => vec![SweepScheme::NonRobust],
            SchemeArg::Both => vec![SweepScheme::Robust, SweepScheme::NonRobust],
        }
    }
}

/// Command-line overrides applied after the config file.
#[derive(Debug, Default, Clone, Copy)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub scheme: Option<SchemeArg>,
    pub mode: Option<DopplerMode>,
    pub trials: Option<usize>,
}

impl Overrides {
    pub fn apply_to(&self, mut cfg: SweepConfig) -> SweepConfig {
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(s) = self.scheme {
            cfg.schemes = s.to_schemes();
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        cfg
    }
}

/// Load (optional) file config, overlay onto the scale base, apply flag
/// overrides, and validate feasibility.
pub fn resolve_config(
    path: Option<&Path>,
    scale: Scale,
    overrides: &Overrides,
) -> Result<SweepConfig, CliError> {
    let file = match path {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = overrides.apply_to(file.apply_to(scale.base_config()));
    cfg.validate().map_err(classify)?;
    Ok(cfg)
}
