//! Echo-based channel estimation at the sensor side.
//!
//! Each sensor reads its own pilot's reflection off the access point, so every
//! observed tap is a round-trip quantity: delays and Doppler shifts are twice
//! the one-way values. Integer-mode estimation is the closed-form single-pilot
//! read-off; fractional mode observes a pilot block spread across the Doppler
//! axis by the dispersion kernel [`beta`] and runs a maximum-likelihood search
//! over a finite fractional-Doppler candidate set.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::TAU;

use crate::channel::{round_trip_paths, split_doppler, DopplerMode, PathParams, PathSet, TdOperator};
use crate::error::{Error, Result};
use crate::util::complex_gaussian;

/// Default fractional-Doppler candidate set `{-0.5, -0.4, ..., 0.5}`.
pub fn default_candidates() -> Vec<f64> {
    (-5..=5).map(|i| i as f64 * 0.1).collect()
}

/// Pilot placement, guard extents, pilot power and sensor-side noise figure.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotConfig {
    /// Pilot amplitude `x_o` (> 0).
    pub pilot_amplitude: f64,
    /// Pilot delay row `l_c`.
    pub pilot_delay: usize,
    /// Pilot Doppler column `k_c`.
    pub pilot_doppler: usize,
    /// Guarded delay rows beyond the pilot row; the pilot region spans rows
    /// `[l_c, l_c + guard_delay_span]` and must cover every round-trip delay
    /// tap, so `guard_delay_span >= 2 l_max`.
    pub guard_delay_span: usize,
    /// Guarded Doppler span centered on `k_c` (integer mode); must cover
    /// round-trip Doppler shifts, so `>= 4 k_max + 1`.
    pub guard_doppler_span: usize,
    /// Sensor receive-noise variance.
    pub sigma_w_sq: f64,
    /// Fractional-Doppler candidates (fractional mode only).
    pub candidates: Vec<f64>,
}

impl PilotConfig {
    pub fn new(
        pilot_amplitude: f64,
        pilot_delay: usize,
        pilot_doppler: usize,
        guard_delay_span: usize,
        guard_doppler_span: usize,
        sigma_w_sq: f64,
    ) -> Result<Self> {
        if pilot_amplitude <= 0.0 || sigma_w_sq < 0.0 {
            return Err(Error::InfeasibleConfig(
                "pilot amplitude must be > 0 and noise variance >= 0".into(),
            ));
        }
        Ok(Self {
            pilot_amplitude,
            pilot_delay,
            pilot_doppler,
            guard_delay_span,
            guard_doppler_span,
            sigma_w_sq,
            candidates: default_candidates(),
        })
    }

    /// Rows of the fractional-mode observation block: the pilot row plus the
    /// guarded rows below it, all spanning the full Doppler axis.
    pub fn block_rows(&self) -> usize {
        self.guard_delay_span + 1
    }

    /// Check the guard extents against the tap ranges and grid size.
    pub fn validate_for(&self, l_max: usize, k_max: i64, m: usize, n: usize) -> Result<()> {
        if self.guard_delay_span < 2 * l_max {
            return Err(Error::GuardViolation(format!(
                "delay guard span {} < 2 l_max = {}",
                self.guard_delay_span,
                2 * l_max
            )));
        }
        if self.guard_doppler_span < 4 * k_max.unsigned_abs() as usize + 1 {
            return Err(Error::GuardViolation(format!(
                "Doppler guard span {} < 4 k_max + 1 = {}",
                self.guard_doppler_span,
                4 * k_max.unsigned_abs() + 1
            )));
        }
        if self.pilot_delay + self.guard_delay_span >= m {
            return Err(Error::GuardViolation(format!(
                "pilot region [{}..{}] exceeds delay axis of {m} rows",
                self.pilot_delay,
                self.pilot_delay + self.guard_delay_span
            )));
        }
        let half = (self.guard_doppler_span - 1) / 2;
        if self.pilot_doppler < half || self.pilot_doppler + half >= n {
            return Err(Error::GuardViolation(format!(
                "Doppler guard of half-width {half} around column {} exceeds axis of {n} bins",
                self.pilot_doppler
            )));
        }
        Ok(())
    }
}

/// Recovered per-path CSI, carried as one-way taps.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedCsi {
    pub paths: Vec<PathParams>,
    pub mode: DopplerMode,
    pub frame_index: u64,
    /// Whether gains have been multiplied by the aging coefficient.
    pub scaled: bool,
    /// Selected pilot rows whose power did not clear the noise floor
    /// (fractional mode; detection quality hint, not an error).
    pub rows_below_noise_floor: usize,
}

impl EstimatedCsi {
    /// Structured time-domain operator of the estimated channel.
    pub fn td_operator(&self, m: usize, n: usize) -> TdOperator {
        TdOperator::from_params(&self.paths, self.mode, m, n)
    }

    /// Estimated paths as a validated set; fails if detection produced
    /// duplicate delay taps.
    pub fn to_path_set(&self) -> Result<PathSet> {
        PathSet::new(self.paths.clone(), self.mode)
    }
}

/// Sensor-side pilot observation.
#[derive(Debug, Clone, PartialEq)]
pub enum PilotObservation {
    /// One complex read-off per path (integer mode, scalar pilot model).
    Integer(Vec<Complex64>),
    /// The pilot block spanning all Doppler bins of the guarded delay rows.
    Fractional(DMatrix<Complex64>),
}

/// Fractional-Doppler dispersion kernel
/// `beta(a, kappa) = (1/N) (e^{j 2 pi (a + kappa)} - 1) / (e^{j 2 pi (a + kappa) / N} - 1)`,
/// with the removable singularity at `a + kappa = 0 (mod N)` evaluating to 1.
/// `a` enters modulo `N`.
pub fn beta(a: i64, kappa: f64, n: usize) -> Complex64 {
    let nf = n as f64;
    let total = a as f64 + kappa;
    // Integer `a` makes the numerator depend on kappa alone.
    if kappa == 0.0 {
        return if a.rem_euclid(n as i64) == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let numerator = Complex64::from_polar(1.0, TAU * kappa) - 1.0;
    let denominator = Complex64::from_polar(1.0, TAU * total / nf) - 1.0;
    numerator / denominator / nf
}

fn pilot_phase(pilot_delay: usize, total_doppler: f64, mn: usize) -> Complex64 {
    Complex64::from_polar(1.0, TAU * pilot_delay as f64 * total_doppler / mn as f64)
}

/// Per-path echo read-off for integer Doppler: `h_p theta_p x_o + w_p` with
/// `theta_p` the pilot-position phase at the round-trip Doppler shift and
/// `w_p ~ CN(0, sigma_w^2)`.
pub fn simulate_echo_pilot_integer(
    true_paths: &PathSet,
    cfg: &PilotConfig,
    m: usize,
    n: usize,
    rng: &mut impl Rng,
) -> Result<PilotObservation> {
    if true_paths.mode() != DopplerMode::Integer {
        return Err(Error::InfeasibleConfig(
            "integer-mode echo requires an integer-mode path set".into(),
        ));
    }
    let round_trip = round_trip_paths(true_paths, m)?;
    check_round_trip_guards(&round_trip, cfg)?;
    let mn = m * n;
    let obs = round_trip
        .paths()
        .iter()
        .map(|p| {
            let theta = pilot_phase(cfg.pilot_delay, p.doppler_tap as f64, mn);
            p.gain * theta * cfg.pilot_amplitude + complex_gaussian(cfg.sigma_w_sq, rng)
        })
        .collect();
    Ok(PilotObservation::Integer(obs))
}

fn check_round_trip_guards(round_trip: &PathSet, cfg: &PilotConfig) -> Result<()> {
    let half = (cfg.guard_doppler_span.saturating_sub(1) / 2) as i64;
    for p in round_trip.paths() {
        if p.delay_tap > cfg.guard_delay_span {
            return Err(Error::GuardViolation(format!(
                "round-trip delay tap {} outside guard span {}",
                p.delay_tap, cfg.guard_delay_span
            )));
        }
        if p.doppler_tap.abs() > half {
            return Err(Error::GuardViolation(format!(
                "round-trip Doppler tap {} outside guard half-width {half}",
                p.doppler_tap
            )));
        }
    }
    Ok(())
}

/// Closed-form integer-mode estimate. Round-trip taps are taken as known and
/// halved; gains are read off as `obs_p / (x_o theta_p)`.
pub fn estimate_integer(
    obs: &PilotObservation,
    round_trip: &PathSet,
    cfg: &PilotConfig,
    m: usize,
    n: usize,
) -> Result<EstimatedCsi> {
    let values = match obs {
        PilotObservation::Integer(v) => v,
        PilotObservation::Fractional(_) => {
            return Err(Error::InfeasibleConfig(
                "fractional observation passed to the integer estimator".into(),
            ))
        }
    };
    if values.len() != round_trip.len() {
        return Err(Error::DimensionMismatch {
            expected: round_trip.len(),
            got: values.len(),
        });
    }
    let mn = m * n;
    let paths = round_trip
        .paths()
        .iter()
        .zip(values)
        .map(|(p, &y)| {
            if p.delay_tap % 2 != 0 {
                return Err(Error::OddRoundTripTap(p.delay_tap));
            }
            if p.doppler_tap.rem_euclid(2) != 0 {
                return Err(Error::OddRoundTripTap(p.doppler_tap.unsigned_abs() as usize));
            }
            let theta = pilot_phase(cfg.pilot_delay, p.doppler_tap as f64, mn);
            Ok(PathParams {
                delay_tap: p.delay_tap / 2,
                doppler_tap: p.doppler_tap / 2,
                frac_doppler: 0.0,
                gain: y / (cfg.pilot_amplitude * theta),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimatedCsi {
        paths,
        mode: DopplerMode::Integer,
        frame_index: 0,
        scaled: false,
        rows_below_noise_floor: 0,
    })
}

/// Fractional-mode echo: each path paints one delay row of the pilot block
/// with dispersed Doppler energy, then white sensor noise covers every cell.
/// Row `r` of the block is delay row `l_c + r`; a path lands on `r` equal to
/// its round-trip delay tap.
pub fn simulate_echo_pilot_fractional(
    true_paths: &PathSet,
    cfg: &PilotConfig,
    m: usize,
    n: usize,
    rng: &mut impl Rng,
) -> Result<PilotObservation> {
    if true_paths.mode() != DopplerMode::Fractional {
        return Err(Error::InfeasibleConfig(
            "fractional-mode echo requires a fractional-mode path set".into(),
        ));
    }
    let round_trip = round_trip_paths(true_paths, m)?;
    let rows = cfg.block_rows();
    let mn = m * n;
    let mut block = DMatrix::<Complex64>::zeros(rows, n);
    let mut seen = vec![false; rows];
    for p in round_trip.paths() {
        let row = p.delay_tap;
        if row >= rows {
            return Err(Error::GuardViolation(format!(
                "round-trip delay tap {row} outside the {rows}-row pilot block"
            )));
        }
        if seen[row] {
            return Err(Error::PilotRowCollision(row));
        }
        seen[row] = true;
        let lead = cfg.pilot_amplitude * p.gain * pilot_phase(cfg.pilot_delay, p.total_doppler(), mn);
        for col in 0..n {
            let a = cfg.pilot_doppler as i64 + p.doppler_tap - col as i64;
            block[(row, col)] += lead * beta(a, p.frac_doppler, n);
        }
    }
    for r in 0..rows {
        for col in 0..n {
            block[(r, col)] += complex_gaussian(cfg.sigma_w_sq, rng);
        }
    }
    Ok(PilotObservation::Fractional(block))
}

/// Maximum-likelihood fractional-Doppler estimation over the pilot block:
/// pick the `P` strongest delay rows, take each row's peak cell as the
/// integer round-trip Doppler, match the dispersed row shape against the
/// candidate set, read the gain off the peak, and halve everything back to
/// one-way taps.
pub fn estimate_fractional(
    obs: &PilotObservation,
    cfg: &PilotConfig,
    num_paths: usize,
    m: usize,
    n: usize,
) -> Result<EstimatedCsi> {
    let block = match obs {
        PilotObservation::Fractional(b) => b,
        PilotObservation::Integer(_) => {
            return Err(Error::InfeasibleConfig(
                "integer observation passed to the fractional estimator".into(),
            ))
        }
    };
    if block.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: block.ncols(),
        });
    }
    let rows = block.nrows();
    if num_paths == 0 || num_paths > rows {
        return Err(Error::InfeasibleConfig(format!(
            "cannot pick {num_paths} rows out of {rows}"
        )));
    }
    if cfg.candidates.is_empty() {
        return Err(Error::EmptyInput("empty fractional candidate set"));
    }
    let mn = m * n;

    let mut row_power: Vec<(usize, f64)> = (0..rows)
        .map(|r| (r, (0..n).map(|c| block[(r, c)].norm_sqr()).sum()))
        .collect();
    // Strongest first; ties resolved toward the lower row index.
    row_power.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let noise_floor = 2.0 * n as f64 * cfg.sigma_w_sq;
    let mut rows_below_noise_floor = 0;
    let mut paths = Vec::with_capacity(num_paths);
    for &(row, power) in row_power.iter().take(num_paths) {
        if power <= noise_floor && cfg.sigma_w_sq > 0.0 {
            rows_below_noise_floor += 1;
        }
        let mut peak_col = 0;
        let mut peak_val = f64::NEG_INFINITY;
        for c in 0..n {
            let v = block[(row, c)].norm_sqr();
            if v > peak_val {
                peak_val = v;
                peak_col = c;
            }
        }
        let doppler_rt = peak_col as i64 - cfg.pilot_doppler as i64;
        let peak = block[(row, peak_col)];

        let mut best_kappa = cfg.candidates[0];
        let mut best_residual = f64::INFINITY;
        for &kappa in &cfg.candidates {
            let scale = peak / beta(0, kappa, n);
            let residual: f64 = (0..n)
                .map(|c| {
                    let template = scale * beta(peak_col as i64 - c as i64, kappa, n);
                    (template - block[(row, c)]).norm_sqr()
                })
                .sum();
            if residual < best_residual {
                best_residual = residual;
                best_kappa = kappa;
            }
        }

        let total_rt = doppler_rt as f64 + best_kappa;
        let gain = peak
            / (cfg.pilot_amplitude * beta(0, best_kappa, n) * pilot_phase(cfg.pilot_delay, total_rt, mn));

        // Halve back to one-way resolution. Detection noise can land on an odd
        // delay row; round rather than fail, since degraded estimates are a
        // legitimate low-SNR outcome here.
        let delay_tap = ((row as f64) / 2.0).round() as usize;
        let (doppler_tap, frac_doppler) = split_doppler(total_rt / 2.0);
        paths.push(PathParams {
            delay_tap,
            doppler_tap,
            frac_doppler,
            gain,
        });
    }
    Ok(EstimatedCsi {
        paths,
        mode: DopplerMode::Fractional,
        frame_index: 0,
        scaled: false,
        rows_below_noise_floor,
    })
}

/// Form the outdated-CSI estimate used by the precoder: gains shrink by the
/// frame-to-frame correlation coefficient.
pub fn scale_outdated(csi: &EstimatedCsi, rho: f64) -> Result<EstimatedCsi> {
    if csi.scaled {
        return Err(Error::AlreadyScaled);
    }
    let mut out = csi.clone();
    for p in out.paths.iter_mut() {
        p.gain *= rho;
    }
    out.scaled = true;
    Ok(out)
}

/// Which taps a grid-offset corruption touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetTarget {
    Delay,
    Doppler,
    Both,
}

/// Independently corrupt taps by one grid step with the given probability
/// (sign equiprobable, clamped to `[0, l_max]` / `[-k_max, k_max]`).
pub fn inject_tap_offsets(
    csi: &EstimatedCsi,
    p_offset: f64,
    which: OffsetTarget,
    l_max: usize,
    k_max: i64,
    rng: &mut impl Rng,
) -> EstimatedCsi {
    let mut out = csi.clone();
    for path in out.paths.iter_mut() {
        if matches!(which, OffsetTarget::Delay | OffsetTarget::Both) && rng.gen::<f64>() < p_offset
        {
            let up = rng.gen::<bool>();
            path.delay_tap = if up {
                (path.delay_tap + 1).min(l_max)
            } else {
                path.delay_tap.saturating_sub(1)
            };
        }
        if matches!(which, OffsetTarget::Doppler | OffsetTarget::Both)
            && rng.gen::<f64>() < p_offset
        {
            let up = rng.gen::<bool>();
            let shifted = if up { path.doppler_tap + 1 } else { path.doppler_tap - 1 };
            path.doppler_tap = shifted.clamp(-k_max, k_max);
        }
    }
    out
}
