//! Shared fixtures for the criterion benchmarks.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use otfs_aircomp::{sample_paths, DopplerMode, PathSet, SweepConfig};

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn random_vector(len: usize, seed: u64) -> DVector<Complex64> {
    let mut r = rng(seed);
    DVector::from_fn(len, |_, _| {
        Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
    })
}

pub fn desk_paths(num_paths: usize, seed: u64) -> PathSet {
    sample_paths(num_paths, 2, 1, DopplerMode::Integer, &mut rng(seed)).unwrap()
}

/// Headline desk configuration with a handful of trials.
pub fn desk_config() -> SweepConfig {
    SweepConfig {
        rho: 0.95,
        pilot_snr_db: 10.0,
        trials: 1,
        snr_grid_db: vec![15.0],
        ..SweepConfig::default()
    }
}
