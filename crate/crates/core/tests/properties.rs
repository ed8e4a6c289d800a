//! Property tests for the transform, operator and tap-arithmetic invariants.

use nalgebra::DVector;
use num_complex::Complex64;
use otfs_aircomp::{
    beta, delay_matrix_power, otfs_demodulate, otfs_modulate, round_trip_paths, sample_paths,
    split_doppler, DdFrame, DopplerMode, GramSolver, TdOperator,
};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn random_vector(len: usize, seed: u64) -> DVector<Complex64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    DVector::from_fn(len, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

proptest! {
    #[test]
    fn modulation_is_unitary(m in 1usize..9, n in 1usize..9, seed in any::<u64>()) {
        let d = random_vector(m * n, seed);
        let s = otfs_modulate(&d, m, n).unwrap();
        prop_assert!((s.norm() - d.norm()).abs() <= 1e-12 * d.norm().max(1.0));
        let back = otfs_demodulate(&s, m, n).unwrap();
        prop_assert!((back - &d).norm() <= 1e-12 * d.norm().max(1.0));
    }

    #[test]
    fn vectorization_round_trips(m in 1usize..9, n in 1usize..9, seed in any::<u64>()) {
        let v = random_vector(m * n, seed);
        let frame = DdFrame::devectorize(m, n, &v).unwrap();
        prop_assert_eq!(frame.vectorize(), v);
    }

    #[test]
    fn delay_powers_compose_cyclically(mn in 2usize..24, a in 0usize..24, b in 0usize..24) {
        let a = a % mn;
        let b = b % mn;
        let prod = delay_matrix_power(mn, a).unwrap() * delay_matrix_power(mn, b).unwrap();
        let direct = delay_matrix_power(mn, (a + b) % mn).unwrap();
        prop_assert!((prod - direct).norm() < 1e-13);
    }

    #[test]
    fn beta_energy_is_unit(n in 1usize..33, kappa in -0.5f64..0.5) {
        let total: f64 = (0..n as i64).map(|a| beta(a, kappa, n).norm_sqr()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn doppler_split_reconstructs(total in -40.0f64..40.0) {
        let (k, kappa) = split_doppler(total);
        prop_assert!((-0.5..=0.5).contains(&kappa));
        prop_assert!((k as f64 + kappa - total).abs() < 1e-12);
    }

    #[test]
    fn round_trip_taps_halve_back(seed in any::<u64>(), p in 1usize..4) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let paths = sample_paths(p, 3, 2, DopplerMode::Integer, &mut rng).unwrap();
        let rt = round_trip_paths(&paths, 16).unwrap();
        for (orig, doubled) in paths.paths().iter().zip(rt.paths()) {
            prop_assert_eq!(doubled.delay_tap / 2, orig.delay_tap);
            prop_assert_eq!(doubled.doppler_tap / 2, orig.doppler_tap);
            prop_assert_eq!(doubled.gain, orig.gain);
        }
    }

    #[test]
    fn banded_solver_tracks_dense(seed in any::<u64>(), p in 1usize..4, lambda in 0.01f64..2.0) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mode = if seed % 2 == 0 { DopplerMode::Integer } else { DopplerMode::Fractional };
        let paths = sample_paths(p, 4, 2, mode, &mut rng).unwrap();
        let op = TdOperator::from_path_set(&paths, 6, 6);
        let banded = GramSolver::new_banded(&op, lambda).unwrap();
        let dense = GramSolver::new_dense(&op, lambda).unwrap();
        let rhs: Vec<Complex64> = random_vector(36, seed ^ 0xabc).as_slice().to_vec();
        let xb = banded.solve_vec(&rhs);
        let xd = dense.solve_vec(&rhs);
        let diff: f64 = xb.iter().zip(&xd).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let scale: f64 = xd.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-9 * scale.max(1.0));
    }
}
