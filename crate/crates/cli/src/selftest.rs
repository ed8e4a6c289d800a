//! Fast property suites over the numerical core, run at an 8x8 grid.
//!
//! Each suite states the tolerance it enforces; the command prints one table
//! row per suite and the process exits nonzero if any suite fails.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use otfs_aircomp::{
    beta, build_effective_channel, build_error_matrix, error_covariance_theory,
    estimate_fractional, estimate_integer, gradient_check, mse_closed_form, mse_monte_carlo,
    non_robust_mmse, otfs_demodulate, otfs_modulate, robust_mmse, round_trip_paths, sample_paths,
    simulate_echo_pilot_fractional, simulate_echo_pilot_integer, DopplerMode, NoiseBudget,
    NoiseConvention, PathParams, PathSet, PilotConfig,
};

const M: usize = 8;
const N: usize = 8;

/// Outcome of one suite.
pub struct SuiteResult {
    pub name: &'static str,
    pub tolerance: &'static str,
    pub error: Option<String>,
}

fn complex_gaussian(var: f64, rng: &mut impl Rng) -> Complex64 {
    use rand_distr::StandardNormal;
    let s = (var * 0.5).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn suite_unitarity() -> Result<(), String> {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    for _ in 0..100 {
        let d = DVector::from_fn(M * N, |_, _| complex_gaussian(1.0, &mut rng));
        let s = otfs_modulate(&d, M, N).map_err(|e| e.to_string())?;
        if (s.norm() - d.norm()).abs() > 1e-12 * d.norm() {
            return Err(format!("norm drift {}", (s.norm() - d.norm()).abs()));
        }
        let back = otfs_demodulate(&s, M, N).map_err(|e| e.to_string())?;
        if (back - &d).norm() > 1e-12 * d.norm() {
            return Err("round trip exceeded 1e-12".into());
        }
    }
    Ok(())
}

fn suite_beta_identities() -> Result<(), String> {
    if (beta(0, 0.0, N) - Complex64::new(1.0, 0.0)).norm() > 1e-14 {
        return Err("beta(0,0) != 1".into());
    }
    for a in 1..N as i64 {
        if beta(a, 0.0, N).norm() > 1e-14 {
            return Err(format!("beta({a},0) != 0"));
        }
    }
    let mut kappa = -0.5;
    while kappa <= 0.5 {
        let total: f64 = (0..N as i64).map(|a| beta(a, kappa, N).norm_sqr()).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(format!("energy {total} at kappa {kappa}"));
        }
        kappa += 0.01;
    }
    Ok(())
}

fn suite_estimator_exactness() -> Result<(), String> {
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    // Integer mode, zero noise.
    let cfg = PilotConfig::new(1.0, 0, N / 2, 4, 5, 0.0).map_err(|e| e.to_string())?;
    for _ in 0..20 {
        let paths = sample_paths(2, 2, 1, DopplerMode::Integer, &mut rng).unwrap();
        let obs = simulate_echo_pilot_integer(&paths, &cfg, M, N, &mut rng).unwrap();
        let rt = round_trip_paths(&paths, M).unwrap();
        let est = estimate_integer(&obs, &rt, &cfg, M, N).unwrap();
        for (truth, got) in paths.paths().iter().zip(&est.paths) {
            if truth.delay_tap != got.delay_tap || truth.doppler_tap != got.doppler_tap {
                return Err("integer taps not exact".into());
            }
            if (truth.gain - got.gain).norm() > 1e-12 {
                return Err("integer gain error above 1e-12".into());
            }
        }
    }
    // Fractional mode, zero noise, on-grid round-trip kappa.
    for trial in 0..20 {
        let kappa_rt = ((trial % 11) as f64 - 5.0) / 10.0;
        let total_one_way = (2.0 + kappa_rt) / 2.0;
        let (k, kappa) = otfs_aircomp::split_doppler(total_one_way);
        let paths = PathSet::new(
            vec![PathParams {
                delay_tap: 1,
                doppler_tap: k,
                frac_doppler: kappa,
                gain: Complex64::from_polar(0.9, 1.1 * trial as f64),
            }],
            DopplerMode::Fractional,
        )
        .unwrap();
        let obs = simulate_echo_pilot_fractional(&paths, &cfg, M, N, &mut rng).unwrap();
        let est = estimate_fractional(&obs, &cfg, 1, M, N).unwrap();
        let truth = &paths.paths()[0];
        let got = &est.paths[0];
        if got.delay_tap != truth.delay_tap {
            return Err("fractional delay tap missed".into());
        }
        if (got.doppler_tap as f64 + got.frac_doppler - truth.total_doppler()).abs() > 1e-10 {
            return Err("fractional Doppler not exact on-grid".into());
        }
        if (got.gain - truth.gain).norm() > 1e-10 {
            return Err("fractional gain error above 1e-10".into());
        }
    }
    Ok(())
}

fn suite_precoder_stationarity() -> Result<(), String> {
    let mut rng = ChaCha12Rng::seed_from_u64(303);
    let paths = sample_paths(3, 3, 1, DopplerMode::Integer, &mut rng).unwrap();
    let h = build_effective_channel(&paths, M, N).unwrap();
    let budget = NoiseBudget::new(0.1, 0.05, 3, (M * N) as f64).unwrap();
    let f = robust_mmse(&h, &budget).map_err(|e| e.to_string())?;
    let mse = mse_closed_form(&h, &f.matrix, &budget).unwrap();
    let deriv = gradient_check(&h, &budget, &f.matrix, 6, 1e-5, &mut rng).unwrap();
    if deriv >= 1e-6 * mse {
        return Err(format!("directional derivative {deriv} vs mse {mse}"));
    }
    let zero_err = NoiseBudget::new(0.1, 0.0, 3, (M * N) as f64).unwrap();
    let fr = robust_mmse(&h, &zero_err).unwrap();
    let fnr = non_robust_mmse(&h, &zero_err).unwrap();
    if (&fr.matrix - &fnr.matrix).norm() > 1e-12 {
        return Err("robust != non-robust at zero error variance".into());
    }
    Ok(())
}

fn suite_mse_agreement() -> Result<(), String> {
    let mut rng = ChaCha12Rng::seed_from_u64(404);
    let paths = sample_paths(3, 3, 1, DopplerMode::Integer, &mut rng).unwrap();
    let h = build_effective_channel(&paths, M, N).unwrap();
    let budget = NoiseBudget::new(0.1, 0.05, 3, (M * N) as f64).unwrap();
    let f = robust_mmse(&h, &budget).unwrap();
    let closed = mse_closed_form(&h, &f.matrix, &budget).unwrap();
    let sampled = mse_monte_carlo(
        &h,
        &f.matrix,
        &budget,
        10_000,
        NoiseConvention::PrecoderNormalized,
        &mut rng,
    )
    .unwrap();
    let rel = (sampled - closed).abs() / closed;
    if rel > 0.02 {
        return Err(format!("closed {closed} vs sampled {sampled} ({rel:.3} rel)"));
    }
    Ok(())
}

fn suite_error_gram() -> Result<(), String> {
    let mut rng = ChaCha12Rng::seed_from_u64(505);
    let p = 3;
    let sigma_e_sq = 0.2;
    let paths = sample_paths(p, 4, 2, DopplerMode::Integer, &mut rng).unwrap();
    let mn = M * N;
    let mut acc = DMatrix::<Complex64>::zeros(mn, mn);
    let draws = 2000;
    for _ in 0..draws {
        let errs: Vec<Complex64> = (0..p).map(|_| complex_gaussian(sigma_e_sq, &mut rng)).collect();
        let e = build_error_matrix(&paths, &errs, M, N).unwrap();
        acc += e.adjoint() * e;
    }
    acc /= Complex64::from(draws as f64);
    let target = error_covariance_theory(p, sigma_e_sq);
    for i in 0..mn {
        if (acc[(i, i)].re - target).abs() > 0.05 * target {
            return Err(format!("diagonal {i}: {} vs {target}", acc[(i, i)].re));
        }
        for j in 0..mn {
            if i != j && acc[(i, j)].norm() > 0.05 * target {
                return Err(format!("off-diagonal ({i},{j}): {}", acc[(i, j)].norm()));
            }
        }
    }
    Ok(())
}

type Suite = (&'static str, &'static str, fn() -> Result<(), String>);

/// Run every suite and collect outcomes.
pub fn run_all() -> Vec<SuiteResult> {
    let suites: Vec<Suite> = vec![
        (
            "transform unitarity and inversion",
            "1e-12 relative",
            suite_unitarity,
        ),
        (
            "dispersion kernel identities",
            "1e-10 (energy on 0.01 grid)",
            suite_beta_identities,
        ),
        (
            "zero-noise estimator exactness",
            "1e-12 integer / 1e-10 fractional",
            suite_estimator_exactness,
        ),
        (
            "precoder stationarity and degeneracy",
            "1e-6 x MSE / 1e-12",
            suite_precoder_stationarity,
        ),
        (
            "closed-form vs sampled MSE",
            "2% at 10^4 samples",
            suite_mse_agreement,
        ),
        (
            "error Gram concentration",
            "5% at 2000 draws",
            suite_error_gram,
        ),
    ];
    suites
        .into_iter()
        .map(|(name, tolerance, run)| SuiteResult {
            name,
            tolerance,
            error: run().err(),
        })
        .collect()
}
