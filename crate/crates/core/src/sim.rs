//! End-to-end multi-sensor aggregation pipeline and Monte Carlo sweep engine.
//!
//! Each trial runs the two-frame loop: sensors estimate their channels from
//! echo pilots in frame `t-1`, scale the gains for CSI aging, build a
//! regularized MMSE precoder, and transmit simultaneously over the evolved
//! frame-`t` channels. The aggregate error against the symbol sum gives the
//! per-trial NMSE contribution.
//!
//! # Power accounting
//!
//! The data/pilot power ratio `r` splits a fixed frame energy `2 MN` between
//! the data payload and the single pilot: total data power `MN P_d` with
//! `P_d = 2r / (1 + r)` and pilot power `x_o^2 = 2 MN / (1 + r)`. At the
//! default `r = 1` every data symbol carries unit power and the pilot SNR
//! equals its configured value. Symbols are always drawn unit-variance; the
//! data power enters through the transmit normalization `gamma`, which is
//! algebraically identical to scaling the symbols themselves.
//!
//! # Determinism
//!
//! Every trial owns a private ChaCha stream derived from
//! `(master seed, SNR index, scheme, trial index)`, and each sensor inside a
//! trial derives its own substream keyed by sensor id. Per-trial results are
//! aggregated in trial order, so sweep output is byte-identical for any
//! worker count. Power-ratio sweeps reuse the same trial seeds across ratios
//! on purpose: ratios differ only through the power split.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::channel::{
    evolve_gains, round_trip_paths, sample_paths, DopplerMode, GaussMarkovModel, TdOperator,
};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_fractional, estimate_integer, inject_tap_offsets, scale_outdated,
    simulate_echo_pilot_fractional, simulate_echo_pilot_integer, OffsetTarget, PilotConfig,
};
use crate::otfs::{CellKind, DdFrame};
use crate::precoder::Precoder;
use crate::solver::{precoder_trace, GramSolver};
use crate::util::complex_gaussian;

/// Precoder family evaluated by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepScheme {
    Robust,
    NonRobust,
}

impl SweepScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepScheme::Robust => "robust",
            SweepScheme::NonRobust => "nonrobust",
        }
    }
}

/// Distribution of the unit-variance data symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolModel {
    Gaussian,
    Qpsk,
}

/// Tap-offset corruption applied to estimated CSI before precoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetSpec {
    pub probability: f64,
    pub target: OffsetKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetKind {
    Delay,
    Doppler,
    Both,
}

impl From<OffsetKind> for OffsetTarget {
    fn from(kind: OffsetKind) -> Self {
        match kind {
            OffsetKind::Delay => OffsetTarget::Delay,
            OffsetKind::Doppler => OffsetTarget::Doppler,
            OffsetKind::Both => OffsetTarget::Both,
        }
    }
}

/// Full description of one Monte Carlo sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Delay bins `M`.
    pub delay_bins: usize,
    /// Doppler bins `N`.
    pub doppler_bins: usize,
    /// Sensor count `Q`.
    pub num_sensors: usize,
    /// Paths per sensor `P`.
    pub num_paths: usize,
    /// Largest one-way delay tap.
    pub max_delay_tap: usize,
    /// Largest one-way Doppler tap magnitude.
    pub max_doppler_tap: i64,
    pub mode: DopplerMode,
    /// Frame-to-frame gain correlation.
    pub rho: f64,
    /// Pilot SNR `x_o^2 / sigma_w^2` in dB at the reference ratio r = 1.
    pub pilot_snr_db: f64,
    /// Data-to-pilot power ratio `r`.
    pub data_pilot_ratio: f64,
    pub snr_grid_db: Vec<f64>,
    /// Trials per (SNR, scheme) point.
    pub trials: usize,
    pub schemes: Vec<SweepScheme>,
    pub offset: Option<OffsetSpec>,
    pub symbol_model: SymbolModel,
    pub master_seed: u64,
    /// Worker-thread cap; `None` uses all available cores.
    pub workers: Option<usize>,
}

impl Default for SweepConfig {
    /// Desk-scale defaults: `M = N = 16`, `Q = 3`, `P = 2`, `l_max = 2`,
    /// `k_max = 1`, `rho = 0.99`, pilot SNR 30 dB, SNR 0..30 dB in 5 dB
    /// steps, 500 trials per point, both schemes.
    fn default() -> Self {
        Self {
            delay_bins: 16,
            doppler_bins: 16,
            num_sensors: 3,
            num_paths: 2,
            max_delay_tap: 2,
            max_doppler_tap: 1,
            mode: DopplerMode::Integer,
            rho: 0.99,
            pilot_snr_db: 30.0,
            data_pilot_ratio: 1.0,
            snr_grid_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            trials: 500,
            schemes: vec![SweepScheme::Robust, SweepScheme::NonRobust],
            offset: None,
            symbol_model: SymbolModel::Gaussian,
            master_seed: 42,
            workers: None,
        }
    }
}

impl SweepConfig {
    pub fn mn(&self) -> usize {
        self.delay_bins * self.doppler_bins
    }

    /// Pilot power `x_o^2 = 2 MN / (1 + r)`.
    pub fn pilot_power(&self) -> f64 {
        2.0 * self.mn() as f64 / (1.0 + self.data_pilot_ratio)
    }

    pub fn pilot_amplitude(&self) -> f64 {
        self.pilot_power().sqrt()
    }

    /// Sensor receive-noise variance, anchored so the pilot SNR at `r = 1`
    /// equals `pilot_snr_db`.
    pub fn sensor_noise_var(&self) -> f64 {
        self.mn() as f64 * 10f64.powf(-self.pilot_snr_db / 10.0)
    }

    /// Per-symbol data power `P_d = 2r / (1 + r)`.
    pub fn data_symbol_power(&self) -> f64 {
        2.0 * self.data_pilot_ratio / (1.0 + self.data_pilot_ratio)
    }

    /// Transmit power budget `P_t = MN P_d`.
    pub fn total_data_power(&self) -> f64 {
        self.mn() as f64 * self.data_symbol_power()
    }

    /// Receiver noise variance at an SNR point (unit symbol power reference).
    pub fn noise_var_at(&self, snr_db: f64) -> f64 {
        10f64.powf(-snr_db / 10.0)
    }

    pub fn gauss_markov(&self) -> Result<GaussMarkovModel> {
        GaussMarkovModel::new(
            self.rho,
            self.sensor_noise_var(),
            self.pilot_amplitude(),
            self.num_paths,
        )
    }

    /// Orthogonal pilot placement for one sensor: a private block of
    /// `2 l_max + 1` delay rows, pilot Doppler column at `N / 2`.
    pub fn pilot_config_for_sensor(&self, sensor: usize) -> Result<PilotConfig> {
        let span = 2 * self.max_delay_tap;
        let l_c = sensor * (span + 1);
        let cfg = PilotConfig::new(
            self.pilot_amplitude(),
            l_c,
            self.doppler_bins / 2,
            span,
            4 * self.max_doppler_tap.unsigned_abs() as usize + 1,
            self.sensor_noise_var(),
        )?;
        cfg.validate_for(
            self.max_delay_tap,
            self.max_doppler_tap,
            self.delay_bins,
            self.doppler_bins,
        )?;
        Ok(cfg)
    }

    /// Same sweep at a different data/pilot power split.
    pub fn with_ratio(&self, ratio: f64) -> Self {
        Self {
            data_pilot_ratio: ratio,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InfeasibleConfig(msg));
        if self.delay_bins == 0 || self.doppler_bins == 0 {
            return fail("grid dimensions must be positive".into());
        }
        if self.trials == 0 {
            return fail("trials must be >= 1".into());
        }
        if self.num_sensors == 0 {
            return fail("need at least one sensor".into());
        }
        if self.num_paths == 0 {
            return fail("need at least one path".into());
        }
        if self.num_paths > self.max_delay_tap + 1 {
            return fail(format!(
                "P = {} > l_max + 1 = {}: distinct delay taps are impossible",
                self.num_paths,
                self.max_delay_tap + 1
            ));
        }
        if 2 * self.max_delay_tap >= self.delay_bins {
            return fail(format!(
                "2 l_max = {} must stay below M = {}",
                2 * self.max_delay_tap,
                self.delay_bins
            ));
        }
        if self.num_sensors * (2 * self.max_delay_tap + 1) > self.delay_bins {
            return fail(format!(
                "Q (2 l_max + 1) = {} > M = {}: orthogonal pilot rows do not fit",
                self.num_sensors * (2 * self.max_delay_tap + 1),
                self.delay_bins
            ));
        }
        if self.doppler_bins < 4 * self.max_doppler_tap.unsigned_abs() as usize + 2 {
            return fail(format!(
                "N = {} too small for round-trip Doppler guard of k_max = {}",
                self.doppler_bins, self.max_doppler_tap
            ));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return fail(format!("rho = {} outside (0, 1]", self.rho));
        }
        if self.data_pilot_ratio <= 0.0 {
            return fail(format!(
                "data/pilot power ratio must be positive, got {}",
                self.data_pilot_ratio
            ));
        }
        if self.snr_grid_db.is_empty() {
            return fail("empty SNR grid".into());
        }
        if self.schemes.is_empty() {
            return fail("empty scheme set".into());
        }
        if self.schemes.len() == 2 && self.schemes[0] == self.schemes[1] {
            return fail("duplicate scheme entries".into());
        }
        // Materialize the shared frame layout; overlapping pilot regions
        // surface here as an error.
        self.pilot_layout()?;
        Ok(())
    }

    /// Frame layout with every sensor's pilot and guard region marked.
    /// Regions must be pairwise disjoint.
    pub fn pilot_layout(&self) -> Result<DdFrame> {
        let mut frame = DdFrame::zeros(self.delay_bins, self.doppler_bins);
        for sensor in 0..self.num_sensors {
            let cfg = self.pilot_config_for_sensor(sensor)?;
            let rows = cfg.pilot_delay..=cfg.pilot_delay + cfg.guard_delay_span;
            let cols: Vec<usize> = match self.mode {
                DopplerMode::Fractional => (0..self.doppler_bins).collect(),
                DopplerMode::Integer => {
                    let half = (cfg.guard_doppler_span - 1) / 2;
                    (cfg.pilot_doppler - half..=cfg.pilot_doppler + half).collect()
                }
            };
            for row in rows {
                for &col in &cols {
                    if frame.kind(row, col) != CellKind::Data {
                        return Err(Error::InfeasibleConfig(format!(
                            "pilot regions overlap at grid cell ({row}, {col})"
                        )));
                    }
                    let kind = if row == cfg.pilot_delay && col == cfg.pilot_doppler {
                        CellKind::Pilot
                    } else {
                        CellKind::Guard
                    };
                    frame.set_kind(row, col, kind);
                }
            }
        }
        Ok(frame)
    }
}

// ---------------------------------------------------------------------------
// Deterministic seed derivation
// ---------------------------------------------------------------------------

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    let mut state = 0x243F_6A88_85A3_08D3; // arbitrary fixed offset
    let mut acc = 0u64;
    for &p in parts {
        state ^= p.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        acc ^= splitmix64(&mut state);
    }
    acc
}

/// Per-trial seed: a pure function of master seed, SNR index, scheme and
/// trial index. Ratio sweeps intentionally share these across ratios.
pub fn derive_trial_seed(master: u64, snr_index: usize, scheme: SweepScheme, trial: usize) -> u64 {
    let scheme_id = match scheme {
        SweepScheme::Robust => 1u64,
        SweepScheme::NonRobust => 2u64,
    };
    mix(&[master, snr_index as u64, scheme_id, trial as u64])
}

fn rng_from(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut state = seed ^ stream.wrapping_mul(0xD134_2543_DE82_EF95);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(bytes)
}

fn draw_symbols(mn: usize, model: SymbolModel, rng: &mut impl Rng) -> Vec<Complex64> {
    const HALF_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;
    (0..mn)
        .map(|_| match model {
            SymbolModel::Gaussian => complex_gaussian(1.0, rng),
            SymbolModel::Qpsk => {
                let re = if rng.gen::<bool>() { HALF_SQRT2 } else { -HALF_SQRT2 };
                let im = if rng.gen::<bool>() { HALF_SQRT2 } else { -HALF_SQRT2 };
                Complex64::new(re, im)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Frame-level aggregation
// ---------------------------------------------------------------------------

/// One sensor ready to transmit: its true effective channel for the current
/// frame and the precoder built from previous-frame CSI.
#[derive(Debug, Clone)]
pub struct SensorState {
    pub id: usize,
    pub channel: DMatrix<Complex64>,
    pub precoder: Precoder,
}

/// Result of one simultaneous multi-sensor frame.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub received: DVector<Complex64>,
    pub target: DVector<Complex64>,
    pub numerator: f64,
    pub denominator: f64,
}

/// Superpose all sensors over the multi-access channel:
/// `y = sum_q (H_q F_q x_q + n_q / gamma_q)` against the target `sum_q x_q`.
pub fn run_frame(
    sensors: &[SensorState],
    sigma_n_sq: f64,
    symbol_model: SymbolModel,
    rng: &mut impl Rng,
) -> Result<FrameOutcome> {
    if sensors.is_empty() {
        return Err(Error::EmptyInput("run_frame needs at least one sensor"));
    }
    let mn = sensors[0].channel.nrows();
    for s in sensors {
        if s.channel.nrows() != mn || s.precoder.matrix.nrows() != mn {
            return Err(Error::DimensionMismatch {
                expected: mn,
                got: s.channel.nrows().min(s.precoder.matrix.nrows()),
            });
        }
    }
    let mut received = DVector::<Complex64>::zeros(mn);
    let mut target = DVector::<Complex64>::zeros(mn);
    for sensor in sensors {
        let x = DVector::from_vec(draw_symbols(mn, symbol_model, rng));
        let noise_scale = if sensor.precoder.gamma.is_infinite() {
            0.0
        } else {
            1.0 / sensor.precoder.gamma
        };
        received += &sensor.channel * (&sensor.precoder.matrix * &x);
        for i in 0..mn {
            received[i] += noise_scale * complex_gaussian(sigma_n_sq, rng);
        }
        target += x;
    }
    let numerator = (&received - &target).norm_squared();
    let denominator = target.norm_squared();
    Ok(FrameOutcome {
        received,
        target,
        numerator,
        denominator,
    })
}

/// Ratio-of-sums NMSE estimator over per-trial numerators and denominators.
pub fn nmse(numerators: &[f64], denominators: &[f64]) -> Result<f64> {
    if numerators.is_empty() || numerators.len() != denominators.len() {
        return Err(Error::EmptyInput("nmse needs matching non-empty inputs"));
    }
    let den: f64 = denominators.iter().sum();
    if den <= 0.0 {
        return Err(Error::NumericalContract(
            "nmse denominator must be positive".into(),
        ));
    }
    Ok(numerators.iter().sum::<f64>() / den)
}

/// Linearization standard error of the ratio-of-sums estimator.
fn ratio_stderr(pairs: &[TrialOutput]) -> (f64, f64) {
    let t = pairs.len();
    let num: f64 = pairs.iter().map(|p| p.numerator).sum();
    let den: f64 = pairs.iter().map(|p| p.denominator).sum();
    let ratio = num / den;
    if t < 2 {
        return (ratio, 0.0);
    }
    let mean_den = den / t as f64;
    let ss: f64 = pairs
        .iter()
        .map(|p| {
            let r = p.numerator - ratio * p.denominator;
            r * r
        })
        .sum();
    let sd = (ss / (t as f64 - 1.0)).sqrt();
    (ratio, sd / (mean_den * (t as f64).sqrt()))
}

// ---------------------------------------------------------------------------
// Two-frame pipeline
// ---------------------------------------------------------------------------

/// Per-trial aggregation error and target power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutput {
    pub numerator: f64,
    pub denominator: f64,
}

/// One estimate-then-precode trial. Sensor substreams derive from a base
/// value drawn once from `rng`, so sensor randomness is keyed by id.
pub fn run_two_frame_pipeline(
    cfg: &SweepConfig,
    snr_db: f64,
    scheme: SweepScheme,
    rng: &mut impl Rng,
) -> Result<TrialOutput> {
    let base: u64 = rng.gen();
    run_trial(cfg, snr_db, scheme, base)
}

fn run_trial(cfg: &SweepConfig, snr_db: f64, scheme: SweepScheme, base: u64) -> Result<TrialOutput> {
    let (m, n) = (cfg.delay_bins, cfg.doppler_bins);
    let mn = m * n;
    let sigma_n_sq = cfg.noise_var_at(snr_db);
    let model = cfg.gauss_markov()?;
    let total_power = cfg.total_data_power();
    let lambda = match scheme {
        SweepScheme::Robust => sigma_n_sq + cfg.num_paths as f64 * model.sigma_e_sq,
        SweepScheme::NonRobust => sigma_n_sq,
    };

    let mut received = vec![Complex64::default(); mn];
    let mut target = vec![Complex64::default(); mn];
    for sensor in 0..cfg.num_sensors {
        let mut rng_q = rng_from(base, sensor as u64);
        let pilot = cfg.pilot_config_for_sensor(sensor)?;

        // Frame t-1: channel draw and echo-based estimation.
        let paths_prev = sample_paths(
            cfg.num_paths,
            cfg.max_delay_tap,
            cfg.max_doppler_tap,
            cfg.mode,
            &mut rng_q,
        )?;
        let estimated = match cfg.mode {
            DopplerMode::Integer => {
                let obs = simulate_echo_pilot_integer(&paths_prev, &pilot, m, n, &mut rng_q)?;
                let rt = round_trip_paths(&paths_prev, m)?;
                estimate_integer(&obs, &rt, &pilot, m, n)?
            }
            DopplerMode::Fractional => {
                let obs = simulate_echo_pilot_fractional(&paths_prev, &pilot, m, n, &mut rng_q)?;
                estimate_fractional(&obs, &pilot, cfg.num_paths, m, n)?
            }
        };
        let estimated = match &cfg.offset {
            Some(spec) => inject_tap_offsets(
                &estimated,
                spec.probability,
                spec.target.into(),
                cfg.max_delay_tap,
                cfg.max_doppler_tap,
                &mut rng_q,
            ),
            None => estimated,
        };
        let outdated = scale_outdated(&estimated, cfg.rho)?;

        // Precoder from the aged estimate.
        let hat_op = outdated.td_operator(m, n);
        let solver = GramSolver::new(&hat_op, lambda)?;
        let trace = precoder_trace(&hat_op, &solver);
        let inv_gamma = if trace > 0.0 {
            (trace / total_power).sqrt()
        } else {
            0.0
        };

        // Frame t: gains age, the sensor transmits through the true channel.
        let paths_now = evolve_gains(&paths_prev, &model, &mut rng_q);
        let true_op = TdOperator::from_path_set(&paths_now, m, n);

        let x = draw_symbols(mn, cfg.symbol_model, &mut rng_q);
        // H F x reduces to true_td * (A^-1 * hat_td^H x): the unitary
        // grid-to-time factors cancel between the precoder and the channel.
        let mut u = vec![Complex64::default(); mn];
        hat_op.apply_adjoint_add(&x, &mut u);
        solver.solve_in_place(&mut u);
        let mut y_q = vec![Complex64::default(); mn];
        true_op.apply_add(&u, &mut y_q);
        for i in 0..mn {
            received[i] += y_q[i] + inv_gamma * complex_gaussian(sigma_n_sq, &mut rng_q);
            target[i] += x[i];
        }
    }

    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for i in 0..mn {
        numerator += (received[i] - target[i]).norm_sqr();
        denominator += target[i].norm_sqr();
    }
    Ok(TrialOutput {
        numerator,
        denominator,
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// The swept variable of one result row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SweepAxis {
    Snr { snr_db: f64 },
    Ratio { ratio: f64, snr_db: f64 },
}

/// Aggregated statistics for one (axis point, scheme) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub scheme: SweepScheme,
    pub mode: DopplerMode,
    pub nmse_mean: f64,
    pub nmse_stderr: f64,
    pub trials: usize,
    pub trial_seeds: Vec<u64>,
}

/// Sweep output: config echo, per-cell rows, wall-clock metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
    pub elapsed_seconds: f64,
}

pub const RESULT_SCHEMA_VERSION: u32 = 1;

impl SweepResult {
    /// Plot-ready CSV. SNR sweeps use
    /// `snr_db,scheme,mode,nmse_mean,nmse_stderr,trials`; ratio sweeps lead
    /// with `ratio` and carry the SNR alongside.
    pub fn to_csv_string(&self) -> String {
        let ratio_axis = matches!(self.rows.first(), Some(SweepRow { axis: SweepAxis::Ratio { .. }, .. }));
        let mut out = String::new();
        if ratio_axis {
            out.push_str("ratio,snr_db,scheme,mode,nmse_mean,nmse_stderr,trials\n");
        } else {
            out.push_str("snr_db,scheme,mode,nmse_mean,nmse_stderr,trials\n");
        }
        for row in &self.rows {
            let mode = match row.mode {
                DopplerMode::Integer => "integer",
                DopplerMode::Fractional => "fractional",
            };
            match row.axis {
                SweepAxis::Snr { snr_db } => {
                    out.push_str(&format!(
                        "{},{},{},{:.10e},{:.10e},{}\n",
                        snr_db,
                        row.scheme.as_str(),
                        mode,
                        row.nmse_mean,
                        row.nmse_stderr,
                        row.trials
                    ));
                }
                SweepAxis::Ratio { ratio, snr_db } => {
                    out.push_str(&format!(
                        "{},{},{},{},{:.10e},{:.10e},{}\n",
                        ratio,
                        snr_db,
                        row.scheme.as_str(),
                        mode,
                        row.nmse_mean,
                        row.nmse_stderr,
                        row.trials
                    ));
                }
            }
        }
        out
    }
}

struct TrialTask {
    row: usize,
    cfg: SweepConfig,
    snr_db: f64,
    scheme: SweepScheme,
    seed: u64,
}

fn execute_tasks(tasks: &[TrialTask], workers: Option<usize>) -> Result<Vec<TrialOutput>> {
    let run_all = || {
        tasks
            .par_iter()
            .map(|t| {
                let mut rng = rng_from(t.seed, 0);
                run_two_frame_pipeline(&t.cfg, t.snr_db, t.scheme, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    };
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::InfeasibleConfig(format!("worker pool: {e}")))?;
            pool.install(run_all)
        }
        None => run_all(),
    }
}

fn aggregate(
    mut skeleton: Vec<SweepRow>,
    tasks: &[TrialTask],
    outputs: Vec<TrialOutput>,
) -> Vec<SweepRow> {
    let mut per_row: Vec<Vec<TrialOutput>> = vec![Vec::new(); skeleton.len()];
    // Task order is deterministic; trial order within a row follows from it.
    for (task, out) in tasks.iter().zip(outputs) {
        per_row[task.row].push(out);
    }
    for (row, outs) in skeleton.iter_mut().zip(&per_row) {
        let (mean, stderr) = ratio_stderr(outs);
        row.nmse_mean = mean;
        row.nmse_stderr = stderr;
        row.trials = outs.len();
    }
    skeleton
}

/// Run the full (SNR grid x scheme set) Monte Carlo sweep.
pub fn monte_carlo_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let started = Instant::now();
    let mut skeleton = Vec::new();
    let mut tasks = Vec::new();
    for (si, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
        for &scheme in &cfg.schemes {
            let row = skeleton.len();
            let seeds: Vec<u64> = (0..cfg.trials)
                .map(|t| derive_trial_seed(cfg.master_seed, si, scheme, t))
                .collect();
            for &seed in &seeds {
                tasks.push(TrialTask {
                    row,
                    cfg: cfg.clone(),
                    snr_db,
                    scheme,
                    seed,
                });
            }
            skeleton.push(SweepRow {
                axis: SweepAxis::Snr { snr_db },
                scheme,
                mode: cfg.mode,
                nmse_mean: 0.0,
                nmse_stderr: 0.0,
                trials: 0,
                trial_seeds: seeds,
            });
        }
    }
    let outputs = execute_tasks(&tasks, cfg.workers)?;
    let rows = aggregate(skeleton, &tasks, outputs);
    Ok(SweepResult {
        schema_version: RESULT_SCHEMA_VERSION,
        config: cfg.clone(),
        rows,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Sweep the data/pilot power split under the fixed frame energy budget.
/// Trial seeds are shared across ratios so that two ratios differ only
/// through the power split.
pub fn power_ratio_sweep(cfg: &SweepConfig, ratios: &[f64]) -> Result<SweepResult> {
    if ratios.is_empty() {
        return Err(Error::EmptyInput("power_ratio_sweep needs ratios"));
    }
    for &r in ratios {
        if r <= 0.0 {
            return Err(Error::InfeasibleConfig(format!(
                "power ratio must be positive, got {r}"
            )));
        }
        cfg.with_ratio(r).validate()?;
    }
    let started = Instant::now();
    let mut skeleton = Vec::new();
    let mut tasks = Vec::new();
    for &ratio in ratios {
        let ratio_cfg = cfg.with_ratio(ratio);
        for (si, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
            for &scheme in &cfg.schemes {
                let row = skeleton.len();
                let seeds: Vec<u64> = (0..cfg.trials)
                    .map(|t| derive_trial_seed(cfg.master_seed, si, scheme, t))
                    .collect();
                for &seed in &seeds {
                    tasks.push(TrialTask {
                        row,
                        cfg: ratio_cfg.clone(),
                        snr_db,
                        scheme,
                        seed,
                    });
                }
                skeleton.push(SweepRow {
                    axis: SweepAxis::Ratio { ratio, snr_db },
                    scheme,
                    mode: cfg.mode,
                    nmse_mean: 0.0,
                    nmse_stderr: 0.0,
                    trials: 0,
                    trial_seeds: seeds,
                });
            }
        }
    }
    let outputs = execute_tasks(&tasks, cfg.workers)?;
    let rows = aggregate(skeleton, &tasks, outputs);
    Ok(SweepResult {
        schema_version: RESULT_SCHEMA_VERSION,
        config: cfg.clone(),
        rows,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}
