//! Trend checks asserting each figure's qualitative shape on sweep output.

use otfs_aircomp::{SweepAxis, SweepResult, SweepRow, SweepScheme};

use crate::presets::FigurePreset;

/// One named pass/fail property with its evaluation detail.
#[derive(Debug, Clone)]
pub struct TrendCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Sorted (by SNR) rows of one scheme.
fn snr_curve(result: &SweepResult, scheme: SweepScheme) -> Vec<(f64, &SweepRow)> {
    let mut rows: Vec<(f64, &SweepRow)> = result
        .rows
        .iter()
        .filter(|r| r.scheme == scheme)
        .filter_map(|r| match r.axis {
            SweepAxis::Snr { snr_db } => Some((snr_db, r)),
            SweepAxis::Ratio { .. } => None,
        })
        .collect();
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rows
}

fn combined_slack(a: &SweepRow, b: &SweepRow) -> f64 {
    2.0 * (a.nmse_stderr.powi(2) + b.nmse_stderr.powi(2)).sqrt()
}

/// Robust mean never above non-robust mean beyond two combined stderr.
pub fn check_robust_dominates(result: &SweepResult) -> TrendCheck {
    let robust = snr_curve(result, SweepScheme::Robust);
    let non_robust = snr_curve(result, SweepScheme::NonRobust);
    let mut passed = robust.len() == non_robust.len() && !robust.is_empty();
    let mut worst = String::from("no points");
    let mut margin = f64::INFINITY;
    for ((snr, r), (_, n)) in robust.iter().zip(&non_robust) {
        let gap = n.nmse_mean + combined_slack(r, n) - r.nmse_mean;
        if gap < margin {
            margin = gap;
            worst = format!("tightest at {snr} dB: robust {:.4} vs non-robust {:.4}", r.nmse_mean, n.nmse_mean);
        }
        if gap < 0.0 {
            passed = false;
        }
    }
    TrendCheck {
        name: "robust <= non-robust at all points (within 2 stderr)".into(),
        passed,
        detail: worst,
    }
}

/// Non-robust NMSE at the top of the grid strictly exceeds the grid minimum.
pub fn check_non_robust_rebound(result: &SweepResult) -> TrendCheck {
    let curve = snr_curve(result, SweepScheme::NonRobust);
    match (curve.first(), curve.last()) {
        (Some(_), Some((top_snr, top))) => {
            let min = curve
                .iter()
                .map(|(_, r)| r.nmse_mean)
                .fold(f64::INFINITY, f64::min);
            let passed = top.nmse_mean > min;
            TrendCheck {
                name: "non-robust NMSE rises again at high SNR".into(),
                passed,
                detail: format!(
                    "NMSE({top_snr} dB) = {:.4} vs grid minimum {min:.4}",
                    top.nmse_mean
                ),
            }
        }
        _ => TrendCheck {
            name: "non-robust NMSE rises again at high SNR".into(),
            passed: false,
            detail: "no non-robust rows".into(),
        },
    }
}

/// Robust curve is non-increasing within two combined stderr.
pub fn check_robust_non_increasing(result: &SweepResult) -> TrendCheck {
    let curve = snr_curve(result, SweepScheme::Robust);
    let mut passed = !curve.is_empty();
    let mut detail = String::from("monotone within tolerance");
    for pair in curve.windows(2) {
        let (snr_a, a) = &pair[0];
        let (snr_b, b) = &pair[1];
        if b.nmse_mean > a.nmse_mean + combined_slack(a, b) {
            passed = false;
            detail = format!(
                "increase {snr_a}->{snr_b} dB: {:.4} -> {:.4}",
                a.nmse_mean, b.nmse_mean
            );
        }
    }
    TrendCheck {
        name: "robust NMSE non-increasing across the grid (within 2 stderr)".into(),
        passed,
        detail,
    }
}

/// Ratio sweep has an interior minimum: both endpoints sit above the minimum
/// by more than two combined stderr.
pub fn check_interior_minimum(result: &SweepResult) -> TrendCheck {
    let mut rows: Vec<(f64, &SweepRow)> = result
        .rows
        .iter()
        .filter_map(|r| match r.axis {
            SweepAxis::Ratio { ratio, .. } => Some((ratio, r)),
            SweepAxis::Snr { .. } => None,
        })
        .collect();
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if rows.len() < 3 {
        return TrendCheck {
            name: "NMSE(ratio) has an interior minimum".into(),
            passed: false,
            detail: "fewer than three ratio points".into(),
        };
    }
    let (min_idx, _) = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.nmse_mean.partial_cmp(&b.1 .1.nmse_mean).unwrap())
        .unwrap();
    let min_row = rows[min_idx].1;
    let first = rows.first().unwrap().1;
    let last = rows.last().unwrap().1;
    let interior = min_idx != 0 && min_idx != rows.len() - 1;
    let first_clears = first.nmse_mean > min_row.nmse_mean + combined_slack(first, min_row);
    let last_clears = last.nmse_mean > min_row.nmse_mean + combined_slack(last, min_row);
    TrendCheck {
        name: "NMSE(ratio) has an interior minimum".into(),
        passed: interior && first_clears && last_clears,
        detail: format!(
            "min {:.4} at r = {}, endpoints {:.4} / {:.4}",
            min_row.nmse_mean, rows[min_idx].0, first.nmse_mean, last.nmse_mean
        ),
    }
}

/// Evaluate the trend suite a preset promises.
pub fn checks_for(preset: FigurePreset, result: &SweepResult) -> Vec<TrendCheck> {
    match preset {
        FigurePreset::Fig3 => vec![
            check_robust_dominates(result),
            check_non_robust_rebound(result),
            check_robust_non_increasing(result),
        ],
        FigurePreset::Fig4a | FigurePreset::Fig4b | FigurePreset::Fig4c => vec![
            check_robust_dominates(result),
            check_non_robust_rebound(result),
            check_robust_non_increasing(result),
        ],
        FigurePreset::Fig5 => vec![check_interior_minimum(result)],
    }
}

/// Human-readable report, one line per check.
pub fn render_report(preset: FigurePreset, checks: &[TrendCheck]) -> String {
    let mut out = format!("trend report for {}\n", preset.name());
    for check in checks {
        out.push_str(&format!(
            "{}: {} ({})\n",
            check.name,
            if check.passed { "PASS" } else { "FAIL" },
            check.detail
        ));
    }
    out
}
