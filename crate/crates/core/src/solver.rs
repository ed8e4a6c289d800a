//! Solvers for the regularized Gram systems behind the MMSE precoders.
//!
//! The Gram matrix `A = H^H H + lambda I` of a P-path time-domain channel has
//! nonzero diagonals only at cyclic offsets `l_p - l_q`, so its half-bandwidth
//! is the largest delay-tap spread `b`. For `b << MN` the system factors as a
//! banded Cholesky on the leading `MN - b` unknowns plus a dense Schur
//! complement on the trailing `b` unknowns, which absorb the cyclic wrap.
//! A dense Cholesky backend covers everything else and doubles as the
//! cross-check oracle for the banded path.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::channel::TdOperator;
use crate::error::{Error, Result};

/// Factored `(H^H H + lambda I)` ready for repeated solves.
#[derive(Debug)]
pub struct GramSolver {
    mn: usize,
    backend: Backend,
}

#[derive(Debug)]
enum Backend {
    Dense(Cholesky<Complex64, Dyn>),
    Banded(BandedSchur),
}

impl GramSolver {
    /// Pick the banded factorization when the shift spread allows it.
    pub fn new(op: &TdOperator, lambda: f64) -> Result<Self> {
        let b = op.shift_spread();
        if op.dim() >= 4 * (b + 1) {
            Self::new_banded(op, lambda)
        } else {
            Self::new_dense(op, lambda)
        }
    }

    pub fn new_dense(op: &TdOperator, lambda: f64) -> Result<Self> {
        let a = op.gram_dense(lambda);
        let chol = Cholesky::new(a).ok_or(Error::SingularSystem { lambda })?;
        Ok(Self {
            mn: op.dim(),
            backend: Backend::Dense(chol),
        })
    }

    pub fn new_banded(op: &TdOperator, lambda: f64) -> Result<Self> {
        Ok(Self {
            mn: op.dim(),
            backend: Backend::Banded(BandedSchur::factor(op, lambda)?),
        })
    }

    pub fn dim(&self) -> usize {
        self.mn
    }

    pub fn is_banded(&self) -> bool {
        matches!(self.backend, Backend::Banded(_))
    }

    /// `x <- A^{-1} x`.
    pub fn solve_in_place(&self, x: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.mn);
        match &self.backend {
            Backend::Dense(chol) => {
                let mut v = DVector::from_column_slice(x);
                chol.solve_mut(&mut v);
                x.copy_from_slice(v.as_slice());
            }
            Backend::Banded(schur) => schur.solve_in_place(x),
        }
    }

    pub fn solve_vec(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Squared Frobenius norm of `A^{-1} H^H`, i.e. of the MMSE precoder built
/// from `op` (the unitary grid-to-time factor does not change the norm).
/// Solves one sparse right-hand side per column.
pub fn precoder_trace(op: &TdOperator, solver: &GramSolver) -> f64 {
    let mn = op.dim();
    let mut total = 0.0;
    let mut col = vec![Complex64::default(); mn];
    for j in 0..mn {
        col.fill(Complex64::default());
        // Column j of H^H is the conjugated j-th row of H: one entry per term.
        for term in op.terms() {
            let i = (j + mn - term.shift) % mn;
            col[i] += term.diag[i].conj();
        }
        solver.solve_in_place(&mut col);
        total += col.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    total
}

/// Banded Cholesky with a trailing dense Schur block for the cyclic wrap.
#[derive(Debug)]
struct BandedSchur {
    mn: usize,
    /// Half-bandwidth.
    b: usize,
    /// Leading block size `mn - b`.
    k: usize,
    /// Lower-band Cholesky factor of the leading block:
    /// `band[d][c] = L[c + d, c]`, `d = 0..=b`.
    band: Vec<Vec<Complex64>>,
    /// `Y = L^{-1} A12`, `k x b`, column-major.
    coupling: Vec<Vec<Complex64>>,
    /// Cholesky of the Schur complement `A22 - Y^H Y`.
    schur: Option<Cholesky<Complex64, Dyn>>,
}

impl BandedSchur {
    fn factor(op: &TdOperator, lambda: f64) -> Result<Self> {
        let mn = op.dim();
        let b = op.shift_spread();
        if mn < 2 * (b + 1) {
            return Err(Error::InfeasibleConfig(format!(
                "bandwidth {b} too large for banded factorization at dimension {mn}"
            )));
        }
        let k = mn - b;

        let mut band = vec![vec![Complex64::default(); k]; b + 1];
        let mut a12 = vec![vec![Complex64::default(); k]; b];
        let mut a22 = DMatrix::<Complex64>::zeros(b, b);

        for p in op.terms() {
            for q in op.terms() {
                let delta = p.shift as i64 - q.shift as i64;
                for i in 0..mn {
                    let j = (i as i64 + delta).rem_euclid(mn as i64) as usize;
                    let val = p.diag[i].conj() * q.diag[j];
                    if i < k && j < k {
                        if i >= j {
                            band[i - j][j] += val;
                        }
                    } else if i < k {
                        a12[j - k][i] += val;
                    } else if j >= k {
                        a22[(i - k, j - k)] += val;
                    }
                    // i >= k, j < k is the Hermitian mirror of a12; skip.
                }
            }
        }
        for diag in band[0].iter_mut() {
            *diag += Complex64::from(lambda);
        }
        for d in 0..b {
            a22[(d, d)] += Complex64::from(lambda);
        }

        // In-place banded Cholesky of the leading block.
        for c in 0..k {
            let mut diag = band[0][c].re;
            for d in 1..=b.min(c) {
                diag -= band[d][c - d].norm_sqr();
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(Error::SingularSystem { lambda });
            }
            let l_cc = diag.sqrt();
            band[0][c] = Complex64::from(l_cc);
            for d in 1..=b {
                let r = c + d;
                if r >= k {
                    break;
                }
                let mut val = band[d][c];
                // L[r, t] conj(L[c, t]) over shared band columns t.
                let start = r.saturating_sub(b);
                for t in start..c {
                    val -= band[r - t][t] * band[c - t][t].conj();
                }
                band[d][c] = val / l_cc;
            }
        }

        // Forward-substitute the coupling columns.
        let mut coupling = a12;
        for col in coupling.iter_mut() {
            forward_band(&band, b, col);
        }

        let schur = if b > 0 {
            let mut s = a22;
            for ci in 0..b {
                for cj in 0..b {
                    let dot: Complex64 = coupling[ci]
                        .iter()
                        .zip(&coupling[cj])
                        .map(|(a, b)| a.conj() * b)
                        .sum();
                    s[(ci, cj)] -= dot;
                }
            }
            Some(Cholesky::new(s).ok_or(Error::SingularSystem { lambda })?)
        } else {
            None
        };

        Ok(Self {
            mn,
            b,
            k,
            band,
            coupling,
            schur,
        })
    }

    fn solve_in_place(&self, x: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.mn);
        let (k, b) = (self.k, self.b);
        // u1 = L^{-1} x1
        forward_band(&self.band, b, &mut x[..k]);
        if let Some(schur) = &self.schur {
            // z2 = S^{-1} (x2 - Y^H u1)
            let mut tail = DVector::<Complex64>::zeros(b);
            for d in 0..b {
                let dot: Complex64 = self.coupling[d]
                    .iter()
                    .zip(x.iter())
                    .map(|(c, v)| c.conj() * v)
                    .sum();
                tail[d] = x[k + d] - dot;
            }
            schur.solve_mut(&mut tail);
            // z1 = L^{-H} (u1 - Y z2)
            for d in 0..b {
                let z = tail[d];
                for (v, c) in x.iter_mut().zip(&self.coupling[d]) {
                    *v -= c * z;
                }
                x[k + d] = z;
            }
        }
        backward_band(&self.band, b, &mut x[..k]);
    }
}

/// `x <- L^{-1} x` for the lower band factor.
fn forward_band(band: &[Vec<Complex64>], b: usize, x: &mut [Complex64]) {
    let k = x.len();
    for i in 0..k {
        let mut val = x[i];
        for d in 1..=b.min(i) {
            val -= band[d][i - d] * x[i - d];
        }
        x[i] = val / band[0][i];
    }
}

/// `x <- L^{-H} x` for the lower band factor.
fn backward_band(band: &[Vec<Complex64>], b: usize, x: &mut [Complex64]) {
    let k = x.len();
    for i in (0..k).rev() {
        let mut val = x[i];
        let reach = b.min(k - 1 - i);
        for d in 1..=reach {
            val -= band[d][i].conj() * x[i + d];
        }
        x[i] = val / band[0][i];
    }
}
