//! Closed-form MMSE precoders under imperfect CSI, with closed-form and
//! Monte Carlo MSE evaluators that act as mutual oracles.
//!
//! The robust precoder regularizes the normal matrix by the receiver noise
//! variance plus the aggregate channel-error power `P sigma_e^2`; the
//! non-robust variant uses the noise variance alone. Both are solved per
//! column through a Hermitian positive-definite factorization rather than an
//! explicit inverse.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{EffectiveChannel, TdOperator};
use crate::error::{Error, Result};
use crate::otfs::otfs_modulate;
use crate::util::complex_gaussian;

/// Which regularizer produced a precoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecoderScheme {
    Robust,
    NonRobust,
    Custom,
}

/// A precoding matrix with its transmit power normalization.
#[derive(Debug, Clone)]
pub struct Precoder {
    pub matrix: DMatrix<Complex64>,
    /// `sqrt(P_t / trace(F F^H))`; infinite for the all-zero precoder.
    pub gamma: f64,
    pub scheme: PrecoderScheme,
}

impl Precoder {
    pub fn from_matrix(matrix: DMatrix<Complex64>, total_power: f64, scheme: PrecoderScheme) -> Self {
        let gamma = gamma_for(&matrix, total_power);
        Self {
            matrix,
            gamma,
            scheme,
        }
    }
}

fn gamma_for(f: &DMatrix<Complex64>, total_power: f64) -> f64 {
    let trace = f.norm_squared();
    if trace == 0.0 {
        f64::INFINITY
    } else {
        (total_power / trace).sqrt()
    }
}

/// Noise and error statistics feeding the precoder design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBudget {
    /// Receiver noise variance at the aggregation point.
    pub sigma_n_sq: f64,
    /// Per-path gain-error variance.
    pub sigma_e_sq: f64,
    pub num_paths: usize,
    /// Total transmit power `P_t` for the normalization factor.
    pub total_power: f64,
}

impl NoiseBudget {
    pub fn new(sigma_n_sq: f64, sigma_e_sq: f64, num_paths: usize, total_power: f64) -> Result<Self> {
        if sigma_n_sq < 0.0 || sigma_e_sq < 0.0 || total_power <= 0.0 || num_paths == 0 {
            return Err(Error::InfeasibleConfig(
                "noise budget needs nonnegative variances, positive power, paths >= 1".into(),
            ));
        }
        Ok(Self {
            sigma_n_sq,
            sigma_e_sq,
            num_paths,
            total_power,
        })
    }

    /// `sigma_n^2 + P sigma_e^2`, the robust regularizer.
    pub fn regularizer(&self) -> f64 {
        self.sigma_n_sq + self.num_paths as f64 * self.sigma_e_sq
    }
}

fn solve_regularized(h: &DMatrix<Complex64>, lambda: f64) -> Result<DMatrix<Complex64>> {
    let mn = h.nrows();
    let mut normal = h.adjoint() * h;
    for i in 0..mn {
        normal[(i, i)] += Complex64::from(lambda);
    }
    let chol = Cholesky::new(normal).ok_or(Error::SingularSystem { lambda })?;
    Ok(chol.solve(&h.adjoint()))
}

/// `F* = (H^H H + (sigma_n^2 + P sigma_e^2) I)^{-1} H^H`.
pub fn robust_mmse(h_hat: &EffectiveChannel, budget: &NoiseBudget) -> Result<Precoder> {
    let f = solve_regularized(h_hat.matrix(), budget.regularizer())?;
    Ok(Precoder::from_matrix(f, budget.total_power, PrecoderScheme::Robust))
}

/// Error-blind variant: regularizes by the noise variance alone.
pub fn non_robust_mmse(h_hat: &EffectiveChannel, budget: &NoiseBudget) -> Result<Precoder> {
    let f = solve_regularized(h_hat.matrix(), budget.sigma_n_sq)?;
    Ok(Precoder::from_matrix(
        f,
        budget.total_power,
        PrecoderScheme::NonRobust,
    ))
}

/// Expected aggregation error of precoder `f` under the full error statistics:
/// `tr(HFF^H H^H - HF - F^H H^H + I + (sigma_n^2 + P sigma_e^2) FF^H)`.
pub fn mse_closed_form(
    h_hat: &EffectiveChannel,
    f: &DMatrix<Complex64>,
    budget: &NoiseBudget,
) -> Result<f64> {
    let h = h_hat.matrix();
    if f.nrows() != h.ncols() || f.ncols() != h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: h.ncols(),
            got: f.nrows(),
        });
    }
    let mn = h.nrows() as f64;
    let hf = h * f;
    let tr_hf = hf.trace();
    let value = Complex64::from(hf.norm_squared() + mn + budget.regularizer() * f.norm_squared())
        - tr_hf
        - tr_hf.conj();
    if value.im.abs() > 1e-9 * value.re.abs().max(f64::EPSILON) {
        return Err(Error::NumericalContract(format!(
            "closed-form MSE has imaginary residual {} against real part {}",
            value.im, value.re
        )));
    }
    Ok(value.re)
}

/// Noise handling for the sampled MSE.
///
/// The closed form prices receiver noise at `sigma_n^2 tr(F F^H)`, which is
/// exactly the `n / gamma` model whenever the transmit budget is `P_t = MN`:
/// `MN sigma_n^2 / gamma^2 = sigma_n^2 tr(F F^H) MN / P_t`. So
/// [`NoiseConvention::PrecoderNormalized`] with `total_power = MN` is the
/// sampled counterpart of [`mse_closed_form`]; [`NoiseConvention::Unit`]
/// keeps the raw `MN sigma_n^2` noise floor instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseConvention {
    /// Receiver noise enters as `n / gamma` with `gamma` from the precoder
    /// power normalization (the end-to-end signal model).
    PrecoderNormalized,
    /// Receiver noise enters unscaled.
    Unit,
}

/// Sample-average MSE: draws unit-variance symbols, per-path gain errors and
/// receiver noise, then averages `|((H + E) F - I) x + n / gamma|^2`.
pub fn mse_monte_carlo(
    h_hat: &EffectiveChannel,
    f: &DMatrix<Complex64>,
    budget: &NoiseBudget,
    samples: usize,
    convention: NoiseConvention,
    rng: &mut impl Rng,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::EmptyInput("mse_monte_carlo needs samples >= 1"));
    }
    let h = h_hat.matrix();
    if f.nrows() != h.ncols() || f.ncols() != h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: h.ncols(),
            got: f.nrows(),
        });
    }
    let (m, n) = h_hat.dims();
    let mn = m * n;
    let paths = h_hat.paths();
    let p = paths.len();
    let noise_scale = match convention {
        NoiseConvention::Unit => 1.0,
        NoiseConvention::PrecoderNormalized => {
            let gamma = gamma_for(f, budget.total_power);
            if gamma.is_infinite() {
                0.0
            } else {
                1.0 / gamma
            }
        }
    };
    let hf_minus_i = {
        let mut hf = h * f;
        for i in 0..mn {
            hf[(i, i)] -= Complex64::from(1.0);
        }
        hf
    };
    let mut acc = 0.0;
    let mut errs = vec![Complex64::default(); p];
    for _ in 0..samples {
        let x = DVector::from_fn(mn, |_, _| complex_gaussian(1.0, rng));
        for e in errs.iter_mut() {
            *e = complex_gaussian(budget.sigma_e_sq, rng);
        }
        let err_op = TdOperator::with_weights(paths, &errs, m, n)?;
        let fx = f * &x;
        let mut resid = &hf_minus_i * &x;
        let fx_time = otfs_modulate(&fx, m, n)?;
        let mut err_part = vec![Complex64::default(); mn];
        err_op.apply_add(fx_time.as_slice(), &mut err_part);
        for i in 0..mn {
            resid[i] += err_part[i] + noise_scale * complex_gaussian(budget.sigma_n_sq, rng);
        }
        acc += resid.norm_squared();
    }
    Ok(acc / samples as f64)
}

/// Max central-difference directional derivative of the closed-form MSE at
/// `f_star` along random unit-Frobenius directions (real and imaginary parts
/// both perturbed). Near-zero output certifies stationarity.
pub fn gradient_check(
    h_hat: &EffectiveChannel,
    budget: &NoiseBudget,
    f_star: &DMatrix<Complex64>,
    directions: usize,
    step: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut max_abs: f64 = 0.0;
    for _ in 0..directions {
        let mut delta = DMatrix::from_fn(f_star.nrows(), f_star.ncols(), |_, _| {
            complex_gaussian(1.0, rng)
        });
        let norm = delta.norm();
        if norm == 0.0 {
            continue;
        }
        delta /= Complex64::from(norm);
        let plus = mse_closed_form(h_hat, &(f_star + &delta * Complex64::from(step)), budget)?;
        let minus = mse_closed_form(h_hat, &(f_star - &delta * Complex64::from(step)), budget)?;
        max_abs = max_abs.max(((plus - minus) / (2.0 * step)).abs());
    }
    Ok(max_abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        build_effective_channel, sample_paths, DopplerMode, PathParams, PathSet,
    };
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn identity_channel(mn: usize) -> EffectiveChannel {
        let ps = PathSet::new(
            vec![PathParams {
                delay_tap: 0,
                doppler_tap: 0,
                frac_doppler: 0.0,
                gain: c(1.0, 0.0),
            }],
            DopplerMode::Integer,
        )
        .unwrap();
        EffectiveChannel::from_matrix(DMatrix::identity(mn, mn), ps, mn, 1)
    }

    fn random_channel(m: usize, n: usize, p: usize, seed: u64) -> EffectiveChannel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let ps = sample_paths(p, 3.min(m - 1), 1, DopplerMode::Integer, &mut rng).unwrap();
        build_effective_channel(&ps, m, n).unwrap()
    }

    #[test]
    fn robust_identity_channel_halves() {
        let h = identity_channel(4);
        // sigma_n^2 + P sigma_e^2 = 1
        let budget = NoiseBudget::new(0.5, 0.5, 1, 4.0).unwrap();
        let p = robust_mmse(&h, &budget).unwrap();
        let expected = DMatrix::<Complex64>::identity(4, 4) * Complex64::from(0.5);
        assert!((p.matrix - expected).norm() < 1e-14);
    }

    #[test]
    fn robust_equals_non_robust_without_error() {
        let h = random_channel(4, 4, 2, 1);
        let budget = NoiseBudget::new(0.3, 0.0, 2, 16.0).unwrap();
        let fr = robust_mmse(&h, &budget).unwrap();
        let fn_ = non_robust_mmse(&h, &budget).unwrap();
        assert!((&fr.matrix - &fn_.matrix).norm() < 1e-12);
    }

    #[test]
    fn non_robust_inverts_unitary_channel_at_zero_noise() {
        let g = crate::otfs::dd_transform_matrix(3, 4).unwrap();
        let ps = PathSet::new(
            vec![PathParams {
                delay_tap: 0,
                doppler_tap: 0,
                frac_doppler: 0.0,
                gain: c(1.0, 0.0),
            }],
            DopplerMode::Integer,
        )
        .unwrap();
        let h = EffectiveChannel::from_matrix(g.clone(), ps, 3, 4);
        let budget = NoiseBudget::new(0.0, 0.1, 1, 12.0).unwrap();
        let p = non_robust_mmse(&h, &budget).unwrap();
        assert!((&p.matrix - g.adjoint()).norm() < 1e-10);
    }

    #[test]
    fn closed_form_matches_least_squares_oracle() {
        // Independent route: F columns from QR least squares on the stacked
        // system [H; sqrt(lambda) I] F = [I; 0].
        let h = random_channel(4, 4, 2, 2);
        let budget = NoiseBudget::new(0.2, 0.05, 2, 16.0).unwrap();
        let f = robust_mmse(&h, &budget).unwrap();
        let lambda = budget.regularizer();
        let mn = 16;
        let mut stacked = DMatrix::<Complex64>::zeros(2 * mn, mn);
        stacked.view_mut((0, 0), (mn, mn)).copy_from(h.matrix());
        for i in 0..mn {
            stacked[(mn + i, i)] = Complex64::from(lambda.sqrt());
        }
        let qr = stacked.qr();
        let q = qr.q();
        let r = qr.r();
        let mut rhs = DMatrix::<Complex64>::zeros(2 * mn, mn);
        for i in 0..mn {
            rhs[(i, i)] = Complex64::from(1.0);
        }
        let qtb = q.adjoint() * rhs;
        let f_oracle = r.solve_upper_triangular(&qtb).unwrap();
        assert!(
            (&f.matrix - &f_oracle).norm() < 1e-8 * f_oracle.norm().max(1.0),
            "difference {}",
            (&f.matrix - &f_oracle).norm()
        );
    }

    #[test]
    fn solver_residual_is_tight() {
        let h = random_channel(4, 4, 2, 3);
        let budget = NoiseBudget::new(0.1, 0.02, 2, 16.0).unwrap();
        let f = robust_mmse(&h, &budget).unwrap();
        let lambda = budget.regularizer();
        let mn = 16;
        let normal = h.matrix().adjoint() * h.matrix()
            + DMatrix::<Complex64>::identity(mn, mn) * Complex64::from(lambda);
        let resid = (&normal * &f.matrix - h.matrix().adjoint()).norm();
        assert!(resid < 1e-8 * h.matrix().adjoint().norm());
    }

    #[test]
    fn gamma_normalizes_transmit_power() {
        let h = random_channel(4, 4, 2, 4);
        let budget = NoiseBudget::new(0.2, 0.1, 2, 16.0).unwrap();
        let p = robust_mmse(&h, &budget).unwrap();
        let scaled = &p.matrix * Complex64::from(p.gamma);
        assert_relative_eq!(scaled.norm_squared(), 16.0, max_relative = 1e-10);
    }

    #[test]
    fn singular_system_reported() {
        let ps = PathSet::new(
            vec![PathParams {
                delay_tap: 0,
                doppler_tap: 0,
                frac_doppler: 0.0,
                gain: c(0.0, 0.0),
            }],
            DopplerMode::Integer,
        )
        .unwrap();
        let h = EffectiveChannel::from_matrix(DMatrix::zeros(4, 4), ps, 4, 1);
        let budget = NoiseBudget::new(0.0, 0.0, 1, 4.0).unwrap();
        assert!(matches!(
            robust_mmse(&h, &budget),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn mse_closed_form_trivial_values() {
        let mn = 6;
        let h = identity_channel(mn);
        let budget = NoiseBudget::new(0.25, 0.25, 1, mn as f64).unwrap();
        let lambda = budget.regularizer();
        let eye = DMatrix::<Complex64>::identity(mn, mn);
        // H = F = I: tr algebra collapses to lambda * MN
        let mse = mse_closed_form(&h, &eye, &budget).unwrap();
        assert_relative_eq!(mse, lambda * mn as f64, epsilon = 1e-12);
        // F = 0: MSE = tr(I) = MN
        let zero = DMatrix::<Complex64>::zeros(mn, mn);
        let mse0 = mse_closed_form(&h, &zero, &budget).unwrap();
        assert_relative_eq!(mse0, mn as f64, epsilon = 1e-12);
    }

    #[test]
    fn robust_beats_non_robust_in_closed_form() {
        for seed in 0..100 {
            let h = random_channel(4, 4, 2, 100 + seed);
            let budget = NoiseBudget::new(0.05, 0.2, 2, 16.0).unwrap();
            let fr = robust_mmse(&h, &budget).unwrap();
            let fnr = non_robust_mmse(&h, &budget).unwrap();
            let mr = mse_closed_form(&h, &fr.matrix, &budget).unwrap();
            let mnr = mse_closed_form(&h, &fnr.matrix, &budget).unwrap();
            assert!(
                mr <= mnr + 1e-12,
                "seed {seed}: robust {mr} vs non-robust {mnr}"
            );
        }
    }

    #[test]
    fn monte_carlo_perfect_inversion_is_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let h = random_channel(4, 4, 2, 6);
        let budget = NoiseBudget::new(0.0, 0.0, 2, 16.0).unwrap();
        let f = h.matrix().clone().try_inverse().unwrap();
        let mse = mse_monte_carlo(&h, &f, &budget, 50, NoiseConvention::Unit, &mut rng).unwrap();
        assert!(mse < 1e-18, "mse {mse}");
    }

    #[test]
    fn monte_carlo_zero_precoder_under_both_conventions() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mn = 16;
        let h = random_channel(4, 4, 2, 7);
        let budget = NoiseBudget::new(0.5, 0.3, 2, mn as f64).unwrap();
        let zero = DMatrix::<Complex64>::zeros(mn, mn);
        // Normalized convention: gamma = inf kills the noise term entirely,
        // so the MSE is the target power MN regardless of sigma_e.
        let mse = mse_monte_carlo(
            &h,
            &zero,
            &budget,
            4000,
            NoiseConvention::PrecoderNormalized,
            &mut rng,
        )
        .unwrap();
        assert_relative_eq!(mse, mn as f64, max_relative = 0.05);
        // Unit convention keeps the raw noise: MN + MN sigma_n^2.
        let mse_unit =
            mse_monte_carlo(&h, &zero, &budget, 4000, NoiseConvention::Unit, &mut rng).unwrap();
        assert_relative_eq!(mse_unit, mn as f64 * 1.5, max_relative = 0.05);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        // P_t = MN makes the normalized-noise sample model coincide with the
        // closed-form expression.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let h = random_channel(8, 8, 3, 8);
        let budget = NoiseBudget::new(0.1, 0.05, 3, 64.0).unwrap();
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
        assert_relative_eq!(sampled, closed, max_relative = 0.02);
    }

    #[test]
    fn stationarity_at_the_optimum() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let h = random_channel(4, 4, 2, 10);
        let budget = NoiseBudget::new(0.2, 0.1, 2, 16.0).unwrap();
        let f = robust_mmse(&h, &budget).unwrap();
        let mse_star = mse_closed_form(&h, &f.matrix, &budget).unwrap();
        let deriv = gradient_check(&h, &budget, &f.matrix, 8, 1e-5, &mut rng).unwrap();
        assert!(
            deriv < 1e-6 * mse_star,
            "derivative {deriv} vs mse {mse_star}"
        );
    }

    #[test]
    fn derivative_positive_away_from_optimum() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let h = random_channel(4, 4, 2, 11);
        let budget = NoiseBudget::new(0.2, 0.1, 2, 16.0).unwrap();
        let f = robust_mmse(&h, &budget).unwrap();
        for _ in 0..5 {
            let mut delta =
                DMatrix::from_fn(16, 16, |_, _| complex_gaussian(1.0, &mut rng));
            delta /= Complex64::from(delta.norm());
            let shifted = &f.matrix + &delta * Complex64::from(0.1);
            let step = 1e-5;
            let plus = mse_closed_form(&h, &(&shifted + &delta * Complex64::from(step)), &budget)
                .unwrap();
            let minus = mse_closed_form(&h, &(&shifted - &delta * Complex64::from(step)), &budget)
                .unwrap();
            assert!((plus - minus) / (2.0 * step) > 0.0);
        }
    }

    #[test]
    fn scalar_case_minimizer() {
        // Single-cell grid, unit channel, lambda = 1: F* = 1/2 and the
        // quadratic (1+lambda) F^2 - 2F + 1 is stationary there.
        let h = identity_channel(1);
        let budget = NoiseBudget::new(1.0, 0.0, 1, 1.0).unwrap();
        let f = robust_mmse(&h, &budget).unwrap();
        assert_relative_eq!(f.matrix[(0, 0)].re, 0.5, epsilon = 1e-12);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let deriv = gradient_check(&h, &budget, &f.matrix, 4, 1e-6, &mut rng).unwrap();
        assert!(deriv < 1e-8);
    }

    #[test]
    fn perturbed_precoders_never_beat_the_optimum() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let h = random_channel(4, 4, 2, 13);
        let budget = NoiseBudget::new(0.15, 0.1, 2, 16.0).unwrap();
        let f = robust_mmse(&h, &budget).unwrap();
        let base = mse_closed_form(&h, &f.matrix, &budget).unwrap();
        for _ in 0..100 {
            let mut delta =
                DMatrix::from_fn(16, 16, |_, _| complex_gaussian(1.0, &mut rng));
            delta /= Complex64::from(delta.norm());
            for scale in [1e-3, 1e-2, 1e-1] {
                let perturbed = &f.matrix + &delta * Complex64::from(scale);
                let mse = mse_closed_form(&h, &perturbed, &budget).unwrap();
                assert!(mse >= base - 1e-12);
            }
        }
    }

    #[test]
    fn heavier_error_shrinks_the_precoder() {
        let h = random_channel(4, 4, 2, 14);
        let mut norms = Vec::new();
        for sigma_e_sq in [0.0, 0.05, 0.2, 0.8] {
            let budget = NoiseBudget::new(0.1, sigma_e_sq, 2, 16.0).unwrap();
            norms.push(robust_mmse(&h, &budget).unwrap().matrix.norm());
        }
        for w in norms.windows(2) {
            assert!(w[1] < w[0], "norms not strictly decreasing: {norms:?}");
        }
    }
}
