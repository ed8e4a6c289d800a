use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Circularly-symmetric complex Gaussian draw with the given total variance.
pub(crate) fn complex_gaussian(variance: f64, rng: &mut impl Rng) -> Complex64 {
    let s = (variance * 0.5).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}
