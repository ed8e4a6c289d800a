//! Doubly-selective channel synthesis in the delay-Doppler domain.
//!
//! A channel is a set of `P` propagation paths, each a (delay tap, Doppler
//! tap, fractional Doppler, complex gain) tuple. The time-domain channel
//! matrix is a sum of per-path shift-and-phase operators
//! `sum_p h_p Pi^{l_p} Delta_p`; the effective channel right-multiplies that
//! by the unitary grid-to-time transform. Gains age across frames through a
//! first-order Gauss-Markov recursion, and channel-error matrices share the
//! per-path operator structure with gains replaced by error draws.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::otfs::dd_transform_matrix;
use crate::util::complex_gaussian;

/// Whether path Doppler shifts sit exactly on grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DopplerMode {
    Integer,
    Fractional,
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub delay_tap: usize,
    pub doppler_tap: i64,
    /// Fractional Doppler in `[-0.5, 0.5]`; zero in integer mode.
    pub frac_doppler: f64,
    pub gain: Complex64,
}

impl PathParams {
    /// Total (possibly non-integer) Doppler shift in grid units.
    pub fn total_doppler(&self) -> f64 {
        self.doppler_tap as f64 + self.frac_doppler
    }
}

/// A validated set of paths: non-empty, pairwise-distinct delay taps, and
/// zero fractional parts in integer mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    paths: Vec<PathParams>,
    mode: DopplerMode,
}

impl PathSet {
    pub fn new(paths: Vec<PathParams>, mode: DopplerMode) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptyInput("PathSet requires at least one path"));
        }
        for (i, a) in paths.iter().enumerate() {
            if mode == DopplerMode::Integer && a.frac_doppler != 0.0 {
                return Err(Error::InfeasibleConfig(format!(
                    "integer mode path {i} carries fractional Doppler {}",
                    a.frac_doppler
                )));
            }
            if !(-0.5..=0.5).contains(&a.frac_doppler) {
                return Err(Error::TapOutOfRange(format!(
                    "fractional Doppler {} outside [-0.5, 0.5]",
                    a.frac_doppler
                )));
            }
            for b in paths.iter().skip(i + 1) {
                if a.delay_tap == b.delay_tap {
                    return Err(Error::InfeasibleConfig(format!(
                        "paths share delay tap {}",
                        a.delay_tap
                    )));
                }
            }
        }
        Ok(Self { paths, mode })
    }

    pub fn paths(&self) -> &[PathParams] {
        &self.paths
    }

    pub fn mode(&self) -> DopplerMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn max_delay_tap(&self) -> usize {
        self.paths.iter().map(|p| p.delay_tap).max().unwrap_or(0)
    }
}

/// First-order Gauss-Markov gain-aging model together with the pilot-side
/// noise figures that determine the composite gain-error variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussMarkovModel {
    pub rho: f64,
    pub sigma_w_sq: f64,
    pub pilot_amplitude: f64,
    pub num_paths: usize,
    /// `rho^2 sigma_w^2 / x_o^2 + (1 - rho^2) / P`, fixed at construction.
    pub sigma_e_sq: f64,
}

impl GaussMarkovModel {
    pub fn new(rho: f64, sigma_w_sq: f64, pilot_amplitude: f64, num_paths: usize) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InfeasibleConfig(format!(
                "correlation coefficient {rho} outside (0, 1]"
            )));
        }
        if sigma_w_sq < 0.0 || pilot_amplitude <= 0.0 || num_paths == 0 {
            return Err(Error::InfeasibleConfig(
                "need sigma_w_sq >= 0, pilot amplitude > 0, paths >= 1".into(),
            ));
        }
        let sigma_e_sq = rho * rho * sigma_w_sq / (pilot_amplitude * pilot_amplitude)
            + (1.0 - rho * rho) / num_paths as f64;
        Ok(Self {
            rho,
            sigma_w_sq,
            pilot_amplitude,
            num_paths,
            sigma_e_sq,
        })
    }
}

/// Scalar multiplying the identity in the expected error Gram matrix.
pub fn error_covariance_theory(num_paths: usize, sigma_e_sq: f64) -> f64 {
    num_paths as f64 * sigma_e_sq
}

/// Draw `P` paths: delay taps uniform without replacement on `[0, l_max]`,
/// Doppler taps uniform on `[-k_max, k_max]`, fractional parts uniform on
/// `[-0.5, 0.5]` in fractional mode, gains `CN(0, 1/P)`.
pub fn sample_paths(
    num_paths: usize,
    l_max: usize,
    k_max: i64,
    mode: DopplerMode,
    rng: &mut impl Rng,
) -> Result<PathSet> {
    if num_paths == 0 {
        return Err(Error::EmptyInput("cannot sample zero paths"));
    }
    if num_paths > l_max + 1 {
        return Err(Error::InfeasibleConfig(format!(
            "{num_paths} paths need distinct delay taps but only {} exist (l_max = {l_max})",
            l_max + 1
        )));
    }
    let mut pool: Vec<usize> = (0..=l_max).collect();
    let mut delays = Vec::with_capacity(num_paths);
    for i in 0..num_paths {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
        delays.push(pool[i]);
    }
    let paths = delays
        .into_iter()
        .map(|delay_tap| {
            let doppler_tap = rng.gen_range(-k_max..=k_max);
            let frac_doppler = match mode {
                DopplerMode::Integer => 0.0,
                DopplerMode::Fractional => rng.gen::<f64>() - 0.5,
            };
            let gain = complex_gaussian(1.0 / num_paths as f64, rng);
            PathParams {
                delay_tap,
                doppler_tap,
                frac_doppler,
                gain,
            }
        })
        .collect();
    PathSet::new(paths, mode)
}

/// Split a real Doppler value into nearest integer tap plus remainder in
/// `[-0.5, 0.5]` (ties round away from zero).
pub fn split_doppler(total: f64) -> (i64, f64) {
    let tap = total.round();
    (tap as i64, total - tap)
}

/// Round-trip (echo) taps: delays double, Doppler doubles as a total shift and
/// re-splits, gains are unchanged. `m` bounds the doubled delay span.
pub fn round_trip_paths(paths: &PathSet, m: usize) -> Result<PathSet> {
    if 2 * paths.max_delay_tap() >= m {
        return Err(Error::TapOutOfRange(format!(
            "round-trip delay tap {} exceeds grid span {m}",
            2 * paths.max_delay_tap()
        )));
    }
    let doubled = paths
        .paths()
        .iter()
        .map(|p| {
            let (doppler_tap, frac_doppler) = match paths.mode() {
                DopplerMode::Integer => (2 * p.doppler_tap, 0.0),
                DopplerMode::Fractional => split_doppler(2.0 * p.total_doppler()),
            };
            PathParams {
                delay_tap: 2 * p.delay_tap,
                doppler_tap,
                frac_doppler,
                gain: p.gain,
            }
        })
        .collect();
    PathSet::new(doubled, paths.mode())
}

/// Advance gains one frame: `h_t = rho h_{t-1} + sqrt(1 - rho^2) z`,
/// `z ~ CN(0, 1/P)`. Taps are unchanged.
pub fn evolve_gains(paths: &PathSet, model: &GaussMarkovModel, rng: &mut impl Rng) -> PathSet {
    let rho = model.rho;
    let innovation = (1.0 - rho * rho).max(0.0);
    let p = paths.len() as f64;
    let evolved = paths
        .paths()
        .iter()
        .map(|path| PathParams {
            gain: rho * path.gain + innovation.sqrt() * complex_gaussian(1.0 / p, rng),
            ..*path
        })
        .collect();
    PathSet {
        paths: evolved,
        mode: paths.mode(),
    }
}

/// Doppler diagonal for one path. Integer mode is the plain power
/// `Delta^k`; fractional mode wraps the last `l_p` entries:
/// `diag(w^0, ..., w^{MN-1-l_p}, w^{-l_p}, ..., w^{-1})` with
/// `w = e^{j 2 pi (k_p + kappa_p) / MN}`.
fn doppler_diag(path: &PathParams, mn: usize, mode: DopplerMode) -> Vec<Complex64> {
    let k = match mode {
        DopplerMode::Integer => path.doppler_tap as f64,
        DopplerMode::Fractional => path.total_doppler(),
    };
    let base = TAU * k / mn as f64;
    (0..mn)
        .map(|i| {
            let exp = match mode {
                DopplerMode::Integer => i as f64,
                DopplerMode::Fractional => {
                    if i < mn - path.delay_tap {
                        i as f64
                    } else {
                        i as f64 - mn as f64
                    }
                }
            };
            Complex64::from_polar(1.0, base * exp)
        })
        .collect()
}

/// One `c Pi^l Delta`-style term: cyclic down-shift by `shift` after an
/// elementwise multiply with `diag` (gain already folded in).
#[derive(Debug, Clone)]
pub struct ShiftPhaseTerm {
    pub shift: usize,
    pub diag: Vec<Complex64>,
}

/// Structured (sparse) time-domain channel operator: a sum of per-path
/// shift-and-phase terms. All dense assemblies and fast applications of
/// time-domain channel/error matrices go through this type.
#[derive(Debug, Clone)]
pub struct TdOperator {
    mn: usize,
    terms: Vec<ShiftPhaseTerm>,
}

impl TdOperator {
    pub fn from_params(params: &[PathParams], mode: DopplerMode, m: usize, n: usize) -> Self {
        let mn = m * n;
        let terms = params
            .iter()
            .map(|p| {
                let mut diag = doppler_diag(p, mn, mode);
                for d in diag.iter_mut() {
                    *d *= p.gain;
                }
                ShiftPhaseTerm {
                    shift: p.delay_tap % mn,
                    diag,
                }
            })
            .collect();
        Self { mn, terms }
    }

    pub fn from_path_set(paths: &PathSet, m: usize, n: usize) -> Self {
        Self::from_params(paths.paths(), paths.mode(), m, n)
    }

    /// Same taps, gains replaced by `weights` (used for error matrices).
    pub fn with_weights(
        paths: &PathSet,
        weights: &[Complex64],
        m: usize,
        n: usize,
    ) -> Result<Self> {
        if weights.len() != paths.len() {
            return Err(Error::DimensionMismatch {
                expected: paths.len(),
                got: weights.len(),
            });
        }
        let params: Vec<PathParams> = paths
            .paths()
            .iter()
            .zip(weights)
            .map(|(p, &w)| PathParams { gain: w, ..*p })
            .collect();
        Ok(Self::from_params(&params, paths.mode(), m, n))
    }

    pub fn dim(&self) -> usize {
        self.mn
    }

    pub fn terms(&self) -> &[ShiftPhaseTerm] {
        &self.terms
    }

    /// Largest cyclic shift distance between any two terms; the Gram matrix
    /// of this operator is cyclically banded with this half-bandwidth.
    pub fn shift_spread(&self) -> usize {
        let mut spread = 0;
        for a in &self.terms {
            for b in &self.terms {
                spread = spread.max(a.shift.abs_diff(b.shift));
            }
        }
        spread
    }

    /// `y += self * x`.
    pub fn apply_add(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.mn);
        debug_assert_eq!(y.len(), self.mn);
        for term in &self.terms {
            let s = term.shift;
            for j in 0..self.mn - s {
                y[j + s] += term.diag[j] * x[j];
            }
            for j in self.mn - s..self.mn {
                y[j + s - self.mn] += term.diag[j] * x[j];
            }
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::default(); self.mn];
        self.apply_add(x, &mut y);
        y
    }

    /// `y += self^H * x`.
    pub fn apply_adjoint_add(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.mn);
        debug_assert_eq!(y.len(), self.mn);
        for term in &self.terms {
            let s = term.shift;
            for (j, out) in y.iter_mut().enumerate() {
                let row = if j + s < self.mn { j + s } else { j + s - self.mn };
                *out += term.diag[j].conj() * x[row];
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut h = DMatrix::zeros(self.mn, self.mn);
        for term in &self.terms {
            for j in 0..self.mn {
                let i = (j + term.shift) % self.mn;
                h[(i, j)] += term.diag[j];
            }
        }
        h
    }

    /// Dense Gram matrix `self^H self + lambda I`.
    pub fn gram_dense(&self, lambda: f64) -> DMatrix<Complex64> {
        let mn = self.mn;
        let mut a = DMatrix::zeros(mn, mn);
        for p in &self.terms {
            for q in &self.terms {
                // (T_p^H T_q)[i, j] is nonzero iff i + l_p = j + l_q (mod MN).
                for i in 0..mn {
                    let j = (i + p.shift + mn - q.shift) % mn;
                    a[(i, j)] += p.diag[i].conj() * q.diag[j];
                }
            }
        }
        for i in 0..mn {
            a[(i, i)] += Complex64::new(lambda, 0.0);
        }
        a
    }
}

/// Dense time-domain channel matrix `sum_p h_p Pi^{l_p} Delta_p`.
pub fn build_time_domain_channel(paths: &PathSet, m: usize, n: usize) -> Result<DMatrix<Complex64>> {
    let mn = m * n;
    if paths.max_delay_tap() >= mn {
        return Err(Error::TapOutOfRange(format!(
            "delay tap {} exceeds dimension {mn}",
            paths.max_delay_tap()
        )));
    }
    Ok(TdOperator::from_path_set(paths, m, n).to_dense())
}

/// Effective channel acting on precoded grid symbols: the time-domain matrix
/// right-multiplied by the unitary grid-to-time transform.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    matrix: DMatrix<Complex64>,
    paths: PathSet,
    m: usize,
    n: usize,
}

impl EffectiveChannel {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn paths(&self) -> &PathSet {
        &self.paths
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    /// Wrap an explicit matrix (tests and degenerate setups).
    pub fn from_matrix(matrix: DMatrix<Complex64>, paths: PathSet, m: usize, n: usize) -> Self {
        Self { matrix, paths, m, n }
    }
}

/// `H = H_td (W_N^H (x) I_M)`, assembled without forming the dense product.
pub fn build_effective_channel(paths: &PathSet, m: usize, n: usize) -> Result<EffectiveChannel> {
    let mn = m * n;
    if paths.max_delay_tap() >= mn {
        return Err(Error::TapOutOfRange(format!(
            "delay tap {} exceeds dimension {mn}",
            paths.max_delay_tap()
        )));
    }
    let g = dd_transform_matrix(m, n)?;
    let op = TdOperator::from_path_set(paths, m, n);
    let matrix = td_times_dense(&op, &g);
    Ok(EffectiveChannel {
        matrix,
        paths: paths.clone(),
        m,
        n,
    })
}

/// Row-sparse product `op * g`: row `i` of the result is a P-term combination
/// of rows of `g`.
fn td_times_dense(op: &TdOperator, g: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mn = op.dim();
    let mut h = DMatrix::zeros(mn, mn);
    for term in op.terms() {
        for j in 0..mn {
            let i = (j + term.shift) % mn;
            let w = term.diag[j];
            for col in 0..mn {
                h[(i, col)] += w * g[(j, col)];
            }
        }
    }
    h
}

/// Dense channel-error matrix: per-path errors `e_p` in place of gains,
/// right-multiplied by the grid-to-time transform.
pub fn build_error_matrix(
    paths: &PathSet,
    errors: &[Complex64],
    m: usize,
    n: usize,
) -> Result<DMatrix<Complex64>> {
    let op = TdOperator::with_weights(paths, errors, m, n)?;
    let g = dd_transform_matrix(m, n)?;
    Ok(td_times_dense(&op, &g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::otfs::{delay_matrix_power, doppler_matrix_power};
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn path(l: usize, k: i64, kappa: f64, gain: Complex64) -> PathParams {
        PathParams {
            delay_tap: l,
            doppler_tap: k,
            frac_doppler: kappa,
            gain,
        }
    }

    #[test]
    fn path_set_rejects_duplicates_and_bad_fractions() {
        let dup = vec![path(1, 0, 0.0, c(1.0, 0.0)), path(1, 1, 0.0, c(1.0, 0.0))];
        assert!(PathSet::new(dup, DopplerMode::Integer).is_err());
        let frac_in_integer = vec![path(0, 0, 0.2, c(1.0, 0.0))];
        assert!(PathSet::new(frac_in_integer, DopplerMode::Integer).is_err());
        assert!(PathSet::new(vec![], DopplerMode::Integer).is_err());
    }

    #[test]
    fn sample_paths_forced_single() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let ps = sample_paths(1, 0, 0, DopplerMode::Integer, &mut rng).unwrap();
        assert_eq!(ps.paths()[0].delay_tap, 0);
        assert_eq!(ps.paths()[0].doppler_tap, 0);
    }

    #[test]
    fn sample_paths_pigeonhole_error() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        assert!(sample_paths(5, 3, 1, DopplerMode::Integer, &mut rng).is_err());
    }

    #[test]
    fn sample_paths_gain_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let p = 3;
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let ps = sample_paths(p, 4, 2, DopplerMode::Fractional, &mut rng).unwrap();
            acc += ps.paths()[0].gain.norm_sqr();
        }
        let var = acc / draws as f64;
        assert_relative_eq!(var, 1.0 / p as f64, max_relative = 0.02);
    }

    #[test]
    fn gauss_markov_sigma_e_formula() {
        let gm = GaussMarkovModel::new(0.9, 0.01, 2.0, 4).unwrap();
        let expected = 0.81 * 0.01 / 4.0 + (1.0 - 0.81) / 4.0;
        assert_eq!(gm.sigma_e_sq, expected);
        assert!(GaussMarkovModel::new(0.0, 0.01, 1.0, 1).is_err());
        assert!(GaussMarkovModel::new(1.5, 0.01, 1.0, 1).is_err());
    }

    #[test]
    fn error_covariance_theory_values() {
        assert_eq!(error_covariance_theory(3, 0.0), 0.0);
        assert_relative_eq!(error_covariance_theory(1, 0.1), 0.1);
    }

    #[test]
    fn single_unit_path_is_identity() {
        let ps = PathSet::new(vec![path(0, 0, 0.0, c(1.0, 0.0))], DopplerMode::Integer).unwrap();
        let h = build_time_domain_channel(&ps, 4, 4).unwrap();
        assert!((h - DMatrix::<Complex64>::identity(16, 16)).norm() < 1e-14);
    }

    #[test]
    fn rows_have_exactly_p_nonzeros() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let ps = sample_paths(2, 3, 1, DopplerMode::Integer, &mut rng).unwrap();
        let h = build_time_domain_channel(&ps, 4, 4).unwrap();
        for i in 0..16 {
            let nnz = (0..16).filter(|&j| h[(i, j)].norm() > 1e-15).count();
            assert_eq!(nnz, 2);
        }
    }

    #[test]
    fn td_matches_operator_composition_oracle() {
        // Brute-force assembly from dense Pi^l and Delta^k against the builder.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (m, n) = (4, 4);
        let mn = m * n;
        let ps = sample_paths(2, 3, 1, DopplerMode::Integer, &mut rng).unwrap();
        let mut expected = DMatrix::<Complex64>::zeros(mn, mn);
        for p in ps.paths() {
            let pi = delay_matrix_power(mn, p.delay_tap).unwrap();
            let delta = doppler_matrix_power(mn, p.doppler_tap as f64).unwrap();
            expected += pi * delta * Complex64::from(p.gain);
        }
        let h = build_time_domain_channel(&ps, m, n).unwrap();
        assert!((h - expected).norm() < 1e-12);
    }

    #[test]
    fn fractional_agrees_with_integer_when_kappa_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let ps_int = sample_paths(3, 4, 2, DopplerMode::Integer, &mut rng).unwrap();
        let frac_paths: Vec<PathParams> = ps_int.paths().to_vec();
        let ps_frac = PathSet::new(frac_paths, DopplerMode::Fractional).unwrap();
        let hi = build_time_domain_channel(&ps_int, 4, 4).unwrap();
        let hf = build_time_domain_channel(&ps_frac, 4, 4).unwrap();
        assert!((hi - hf).norm() < 1e-12);
    }

    #[test]
    fn fractional_wrap_only_touches_tail_entries() {
        // With l_p = 0 there is no wrap, so the plain Doppler power applies.
        let ps = PathSet::new(vec![path(0, 1, 0.3, c(1.0, 0.0))], DopplerMode::Fractional).unwrap();
        let h = build_time_domain_channel(&ps, 4, 4).unwrap();
        let delta = doppler_matrix_power(16, 1.3).unwrap();
        assert!((h - delta).norm() < 1e-12);

        // With l_p > 0 the last l_p diagonal entries differ by the wrap phase
        // e^{-j 2 pi (k + kappa)}.
        let lp = 2;
        let ps = PathSet::new(vec![path(lp, 1, 0.3, c(1.0, 0.0))], DopplerMode::Fractional).unwrap();
        let h = build_time_domain_channel(&ps, 4, 4).unwrap();
        let mn = 16;
        let unwrapped = delay_matrix_power(mn, lp).unwrap() * doppler_matrix_power(mn, 1.3).unwrap();
        let wrap = Complex64::from_polar(1.0, -TAU * 1.3);
        for j in 0..mn {
            let i = (j + lp) % mn;
            let expected = if j < mn - lp {
                unwrapped[(i, j)]
            } else {
                unwrapped[(i, j)] * wrap
            };
            assert!((h[(i, j)] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn effective_channel_identity_td() {
        let ps = PathSet::new(vec![path(0, 0, 0.0, c(1.0, 0.0))], DopplerMode::Integer).unwrap();
        let eff = build_effective_channel(&ps, 3, 4).unwrap();
        let g = dd_transform_matrix(3, 4).unwrap();
        assert!((eff.matrix() - g).norm() < 1e-13);
    }

    #[test]
    fn effective_channel_frobenius_matches_td() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let ps = sample_paths(3, 3, 2, DopplerMode::Fractional, &mut rng).unwrap();
        let td = build_time_domain_channel(&ps, 4, 4).unwrap();
        let eff = build_effective_channel(&ps, 4, 4).unwrap();
        assert_relative_eq!(td.norm(), eff.matrix().norm(), max_relative = 1e-10);
    }

    #[test]
    fn effective_channel_composes_with_modulation() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let (m, n) = (4, 4);
        let ps = sample_paths(2, 2, 1, DopplerMode::Integer, &mut rng).unwrap();
        let td = build_time_domain_channel(&ps, m, n).unwrap();
        let eff = build_effective_channel(&ps, m, n).unwrap();
        let x = DVector::from_fn(16, |i, _| c(i as f64 * 0.1 - 0.5, 0.3 - i as f64 * 0.02));
        let via_eff = eff.matrix() * &x;
        let via_td = td * crate::otfs::otfs_modulate(&x, m, n).unwrap();
        assert!((via_eff - via_td).norm() < 1e-11);
    }

    #[test]
    fn round_trip_doubles_taps() {
        let ps = PathSet::new(
            vec![path(2, 1, 0.0, c(0.5, -0.5)), path(0, 0, 0.0, c(1.0, 0.0))],
            DopplerMode::Integer,
        )
        .unwrap();
        let rt = round_trip_paths(&ps, 16).unwrap();
        assert_eq!(rt.paths()[0].delay_tap, 4);
        assert_eq!(rt.paths()[0].doppler_tap, 2);
        assert_eq!(rt.paths()[0].gain, c(0.5, -0.5));
        assert_eq!(rt.paths()[1].delay_tap, 0);
        assert_eq!(rt.paths()[1].doppler_tap, 0);
    }

    #[test]
    fn round_trip_fractional_resplit() {
        let ps = PathSet::new(vec![path(1, 1, 0.3, c(1.0, 0.0))], DopplerMode::Fractional).unwrap();
        let rt = round_trip_paths(&ps, 16).unwrap();
        // 2 * (1 + 0.3) = 2.6 -> (3, -0.4)
        assert_eq!(rt.paths()[0].doppler_tap, 3);
        assert_relative_eq!(rt.paths()[0].frac_doppler, -0.4, epsilon = 1e-12);
        // Halving the round-trip shift recovers the one-way Doppler exactly.
        let (k, kappa) = split_doppler(rt.paths()[0].total_doppler() / 2.0);
        assert_eq!(k, 1);
        assert_relative_eq!(kappa, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_rejects_oversized_taps() {
        let ps = PathSet::new(vec![path(3, 0, 0.0, c(1.0, 0.0))], DopplerMode::Integer).unwrap();
        assert!(round_trip_paths(&ps, 6).is_err());
        assert!(round_trip_paths(&ps, 7).is_ok());
    }

    #[test]
    fn evolve_gains_degenerate_rho() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let ps = sample_paths(2, 2, 1, DopplerMode::Integer, &mut rng).unwrap();
        let gm = GaussMarkovModel::new(1.0 - 1e-12, 0.0, 1.0, 2).unwrap();
        let evolved = evolve_gains(&ps, &gm, &mut rng);
        for (a, b) in ps.paths().iter().zip(evolved.paths()) {
            assert!((a.gain - b.gain).norm() < 1e-5);
            assert_eq!(a.delay_tap, b.delay_tap);
            assert_eq!(a.doppler_tap, b.doppler_tap);
        }
    }

    #[test]
    fn evolve_gains_is_stationary_and_correlated() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let p = 2;
        let gm = GaussMarkovModel::new(0.9, 0.0, 1.0, p).unwrap();
        let mut ps = sample_paths(p, 2, 1, DopplerMode::Integer, &mut rng).unwrap();
        let trials = 100_000;
        let mut var_acc = 0.0;
        let mut corr_acc = Complex64::default();
        for _ in 0..trials {
            let next = evolve_gains(&ps, &gm, &mut rng);
            var_acc += next.paths()[0].gain.norm_sqr();
            corr_acc += next.paths()[0].gain * ps.paths()[0].gain.conj();
            ps = next;
        }
        let var = var_acc / trials as f64;
        assert_relative_eq!(var, 1.0 / p as f64, max_relative = 0.02);
        // E[h_t conj(h_{t-1})] = rho / P for the stationary chain.
        let corr = corr_acc.re / trials as f64 / (1.0 / p as f64);
        assert!((corr - 0.9).abs() < 0.01, "corr = {corr}");
    }

    #[test]
    fn error_matrix_zero_and_equal_gains() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let ps = sample_paths(2, 2, 1, DopplerMode::Integer, &mut rng).unwrap();
        let zeros = vec![Complex64::default(); 2];
        let e = build_error_matrix(&ps, &zeros, 4, 4).unwrap();
        assert!(e.norm() == 0.0);
        let gains: Vec<Complex64> = ps.paths().iter().map(|p| p.gain).collect();
        let e = build_error_matrix(&ps, &gains, 4, 4).unwrap();
        let h = build_effective_channel(&ps, 4, 4).unwrap();
        assert!((e - h.matrix()).norm() < 1e-12);
        assert!(build_error_matrix(&ps, &zeros[..1], 4, 4).is_err());
    }

    #[test]
    fn error_gram_matches_scaled_identity() {
        // Sample mean of E^H E over random error draws approaches P sigma_e^2 I.
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let (m, n) = (8, 8);
        let mn = m * n;
        let p = 3;
        let sigma_e_sq = 0.25;
        let ps = sample_paths(p, 4, 2, DopplerMode::Integer, &mut rng).unwrap();
        let draws = 2000;
        let mut acc = DMatrix::<Complex64>::zeros(mn, mn);
        for _ in 0..draws {
            let errs: Vec<Complex64> = (0..p).map(|_| complex_gaussian(sigma_e_sq, &mut rng)).collect();
            let e = build_error_matrix(&ps, &errs, m, n).unwrap();
            acc += e.adjoint() * e;
        }
        acc /= Complex64::from(draws as f64);
        let target = error_covariance_theory(p, sigma_e_sq);
        for i in 0..mn {
            assert!(
                (acc[(i, i)].re - target).abs() < 0.05 * target,
                "diagonal {i}: {} vs {target}",
                acc[(i, i)].re
            );
        }
        let max_off = (0..mn)
            .flat_map(|i| (0..mn).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| acc[(i, j)].norm())
            .fold(0.0, f64::max);
        assert!(max_off < 0.05 * target, "off-diagonal {max_off}");
    }

    #[test]
    fn td_operator_apply_matches_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let ps = sample_paths(3, 4, 2, DopplerMode::Fractional, &mut rng).unwrap();
        let op = TdOperator::from_path_set(&ps, 4, 4);
        let dense = op.to_dense();
        let x: Vec<Complex64> = (0..16).map(|i| c(0.1 * i as f64, -0.05 * i as f64)).collect();
        let fast = op.apply(&x);
        let xd = DVector::from_column_slice(&x);
        let slow = &dense * &xd;
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let mut adj = vec![Complex64::default(); 16];
        op.apply_adjoint_add(&x, &mut adj);
        let slow_adj = dense.adjoint() * &xd;
        for (a, b) in adj.iter().zip(slow_adj.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn gram_dense_matches_explicit_product() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let ps = sample_paths(3, 4, 2, DopplerMode::Fractional, &mut rng).unwrap();
        let op = TdOperator::from_path_set(&ps, 4, 4);
        let dense = op.to_dense();
        let lambda = 0.37;
        let explicit = dense.adjoint() * &dense
            + DMatrix::<Complex64>::identity(16, 16) * Complex64::from(lambda);
        let gram = op.gram_dense(lambda);
        assert!((gram - explicit).norm() < 1e-12);
    }
}
