//! OTFS-based over-the-air computation at desk scale: delay-Doppler grids and
//! transforms, doubly-selective channel synthesis, echo-based channel
//! estimation with integer and fractional Doppler, closed-form robust MMSE
//! precoding under imperfect CSI, and a reproducible Monte Carlo sweep engine.

pub mod channel;
pub mod error;
pub mod estimation;
pub mod otfs;
pub mod precoder;
pub mod sim;
pub mod solver;
mod util;

pub use channel::{
    build_effective_channel, build_error_matrix, build_time_domain_channel,
    error_covariance_theory, evolve_gains, round_trip_paths, sample_paths, split_doppler,
    DopplerMode, EffectiveChannel, GaussMarkovModel, PathParams, PathSet, TdOperator,
};
pub use error::{Error, Result};
pub use estimation::{
    beta, estimate_fractional, estimate_integer, inject_tap_offsets, scale_outdated,
    simulate_echo_pilot_fractional, simulate_echo_pilot_integer, EstimatedCsi, OffsetTarget,
    PilotConfig, PilotObservation,
};
pub use otfs::{
    delay_matrix_power, doppler_matrix_power, otfs_demodulate, otfs_modulate, CellKind, DdFrame,
    DelayDopplerOperators, TransformDirection, UnitaryDdTransform,
};
pub use precoder::{
    gradient_check, mse_closed_form, mse_monte_carlo, non_robust_mmse, robust_mmse,
    NoiseBudget, NoiseConvention, Precoder, PrecoderScheme,
};
pub use sim::{
    derive_trial_seed, monte_carlo_sweep, nmse, power_ratio_sweep, run_frame,
    run_two_frame_pipeline, FrameOutcome, OffsetKind, OffsetSpec, SensorState, SweepAxis,
    SweepConfig, SweepResult, SweepRow, SweepScheme, SymbolModel, TrialOutput,
};
pub use solver::{precoder_trace, GramSolver};
