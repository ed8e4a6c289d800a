//! Figure presets: pinned parameterizations of the headline experiments.

use clap::ValueEnum;
use otfs_aircomp::{OffsetKind, OffsetSpec, SweepConfig, SweepScheme};

use crate::config::Scale;

/// The published experiment a preset reproduces (desk scale by default).
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigurePreset {
    /// NMSE vs SNR, robust against non-robust, accurate taps.
    Fig3,
    /// As fig3 with 10% one-grid offsets on delay taps.
    Fig4a,
    /// As fig3 with 10% one-grid offsets on Doppler taps.
    Fig4b,
    /// As fig3 with 10% one-grid offsets on both tap kinds.
    Fig4c,
    /// NMSE vs data/pilot power ratio under a fixed frame energy.
    Fig5,
}

impl FigurePreset {
    pub fn name(&self) -> &'static str {
        match self {
            FigurePreset::Fig3 => "fig3",
            FigurePreset::Fig4a => "fig4a",
            FigurePreset::Fig4b => "fig4b",
            FigurePreset::Fig4c => "fig4c",
            FigurePreset::Fig5 => "fig5",
        }
    }

    /// Power ratios swept by fig5.
    pub fn ratios(&self) -> Option<Vec<f64>> {
        match self {
            FigurePreset::Fig5 => Some(vec![0.2, 0.5, 1.0, 1.5, 2.0, 4.0]),
            _ => None,
        }
    }

    /// Materialize the sweep configuration for this preset at a scale.
    pub fn config(&self, scale: Scale) -> SweepConfig {
        let base = scale.base_config();
        match self {
            // Aging and pilot noise high enough that the error floor, not the
            // receiver noise, dominates the high-SNR regime.
            FigurePreset::Fig3 => SweepConfig {
                rho: 0.95,
                pilot_snr_db: 10.0,
                ..base
            },
            FigurePreset::Fig4a => SweepConfig {
                offset: Some(OffsetSpec {
                    probability: 0.1,
                    target: OffsetKind::Delay,
                }),
                ..FigurePreset::Fig3.config(scale)
            },
            FigurePreset::Fig4b => SweepConfig {
                offset: Some(OffsetSpec {
                    probability: 0.1,
                    target: OffsetKind::Doppler,
                }),
                ..FigurePreset::Fig3.config(scale)
            },
            FigurePreset::Fig4c => SweepConfig {
                offset: Some(OffsetSpec {
                    probability: 0.1,
                    target: OffsetKind::Both,
                }),
                ..FigurePreset::Fig3.config(scale)
            },
            // Pilot SNR chosen so the noise-vs-estimation tradeoff balances
            // inside the swept ratio range.
            FigurePreset::Fig5 => SweepConfig {
                rho: 0.99,
                pilot_snr_db: 13.0,
                snr_grid_db: vec![10.0],
                schemes: vec![SweepScheme::Robust],
                ..base
            },
        }
    }
}
