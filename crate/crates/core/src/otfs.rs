//! Delay-Doppler grid representation and the OTFS transform pair.
//!
//! A frame is an `M x N` complex grid (delay bins x Doppler bins). Vectors are
//! column-major stackings of the grid (delay index fastest), so a grid cell
//! `(m, n)` maps to vector index `n * M + m`. Time-domain conversion applies a
//! unitary inverse DFT across the Doppler axis, i.e. multiplication by
//! `W_N^H (x) I_M` with `W_N` the unitary N-point DFT matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Largest MN for which dense operator matrices may be materialized.
/// Above this, operators apply as index shifts and elementwise phases only.
pub const DENSE_LIMIT: usize = 4096;

/// Role of a single grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Data,
    Pilot,
    Guard,
}

/// An `M x N` delay-Doppler frame with a per-cell layout mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame {
    m: usize,
    n: usize,
    grid: DMatrix<Complex64>,
    layout: Vec<CellKind>,
}

impl DdFrame {
    /// All-zero frame with every cell marked as data.
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            grid: DMatrix::zeros(m, n),
            layout: vec![CellKind::Data; m * n],
        }
    }

    /// Frame from an existing grid; every cell marked as data.
    pub fn from_grid(grid: DMatrix<Complex64>) -> Self {
        let (m, n) = (grid.nrows(), grid.ncols());
        Self {
            m,
            n,
            grid,
            layout: vec![CellKind::Data; m * n],
        }
    }

    pub fn delay_bins(&self) -> usize {
        self.m
    }

    pub fn doppler_bins(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &DMatrix<Complex64> {
        &self.grid
    }

    pub fn cell(&self, m: usize, n: usize) -> Complex64 {
        self.grid[(m, n)]
    }

    pub fn set_cell(&mut self, m: usize, n: usize, value: Complex64) {
        self.grid[(m, n)] = value;
    }

    pub fn kind(&self, m: usize, n: usize) -> CellKind {
        self.layout[n * self.m + m]
    }

    pub fn set_kind(&mut self, m: usize, n: usize, kind: CellKind) {
        self.layout[n * self.m + m] = kind;
    }

    /// Column-major stacking: cell `(m, n)` lands at index `n * M + m`.
    pub fn vectorize(&self) -> DVector<Complex64> {
        DVector::from_column_slice(self.grid.as_slice())
    }

    /// Inverse of [`DdFrame::vectorize`]; the layout is reset to all-data.
    pub fn devectorize(m: usize, n: usize, v: &DVector<Complex64>) -> Result<Self> {
        if v.len() != m * n {
            return Err(Error::DimensionMismatch {
                expected: m * n,
                got: v.len(),
            });
        }
        Ok(Self::from_grid(DMatrix::from_column_slice(m, n, v.as_slice())))
    }
}

/// Direction of the unitary delay-Doppler <-> time conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDirection {
    /// Apply `W_N^H (x) I_M` (grid symbols to time samples).
    ToTime,
    /// Apply `W_N (x) I_M` (time samples back to grid symbols).
    ToDd,
}

/// The unitary transform `W_N^H (x) I_M` (or its adjoint) for a fixed grid size.
#[derive(Debug, Clone, Copy)]
pub struct UnitaryDdTransform {
    pub m: usize,
    pub n: usize,
    pub direction: TransformDirection,
}

impl UnitaryDdTransform {
    pub fn new(m: usize, n: usize, direction: TransformDirection) -> Self {
        Self { m, n, direction }
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        match self.direction {
            TransformDirection::ToTime => otfs_modulate(v, self.m, self.n),
            TransformDirection::ToDd => otfs_demodulate(v, self.m, self.n),
        }
    }

    /// Dense matrix form, for oracle tests and small problems only.
    pub fn as_matrix(&self) -> Result<DMatrix<Complex64>> {
        let g = dd_transform_matrix(self.m, self.n)?;
        Ok(match self.direction {
            TransformDirection::ToTime => g,
            TransformDirection::ToDd => g.adjoint(),
        })
    }
}

/// `s = (W_N^H (x) I_M) d`: unitary inverse DFTs across the Doppler axis.
pub fn otfs_modulate(d: &DVector<Complex64>, m: usize, n: usize) -> Result<DVector<Complex64>> {
    doppler_axis_dft(d, m, n, true)
}

/// `d = (W_N (x) I_M) s`, the inverse of [`otfs_modulate`].
pub fn otfs_demodulate(s: &DVector<Complex64>, m: usize, n: usize) -> Result<DVector<Complex64>> {
    doppler_axis_dft(s, m, n, false)
}

fn doppler_axis_dft(
    v: &DVector<Complex64>,
    m: usize,
    n: usize,
    inverse: bool,
) -> Result<DVector<Complex64>> {
    if v.len() != m * n {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            got: v.len(),
        });
    }
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let scale = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let mut out = DVector::zeros(m * n);
    let mut row = vec![Complex64::default(); n];
    for delay in 0..m {
        for dop in 0..n {
            row[dop] = v[dop * m + delay];
        }
        fft.process(&mut row);
        for dop in 0..n {
            out[dop * m + delay] = row[dop] * scale;
        }
    }
    Ok(out)
}

/// Dense `W_N^H (x) I_M` with the unitary DFT convention.
pub fn dd_transform_matrix(m: usize, n: usize) -> Result<DMatrix<Complex64>> {
    let mn = m * n;
    check_dense(mn)?;
    let scale = 1.0 / (n as f64).sqrt();
    let mut g = DMatrix::zeros(mn, mn);
    for row_block in 0..n {
        for col_block in 0..n {
            let phase = TAU * (row_block as f64) * (col_block as f64) / n as f64;
            let w = Complex64::from_polar(scale, phase);
            for inner in 0..m {
                g[(row_block * m + inner, col_block * m + inner)] = w;
            }
        }
    }
    Ok(g)
}

/// Dense cyclic down-shift `Pi^l`: `Pi e_i = e_{(i+1) mod MN}`.
pub fn delay_matrix_power(mn: usize, l: usize) -> Result<DMatrix<Complex64>> {
    check_dense(mn)?;
    if l > mn {
        return Err(Error::PowerOutOfRange { value: l, limit: mn });
    }
    let mut p = DMatrix::zeros(mn, mn);
    for col in 0..mn {
        p[((col + l) % mn, col)] = Complex64::new(1.0, 0.0);
    }
    Ok(p)
}

/// Dense `Delta^k = diag(e^{j 2 pi k i / MN})`, `i = 0..MN-1`; `k` may be real.
pub fn doppler_matrix_power(mn: usize, k: f64) -> Result<DMatrix<Complex64>> {
    check_dense(mn)?;
    Ok(DMatrix::from_diagonal(&DVector::from_iterator(
        mn,
        doppler_phases(mn, k),
    )))
}

/// Diagonal of `Delta^k` as an iterator of unit-modulus phases.
pub fn doppler_phases(mn: usize, k: f64) -> impl Iterator<Item = Complex64> {
    (0..mn).map(move |i| Complex64::from_polar(1.0, TAU * k * i as f64 / mn as f64))
}

/// Handle bundling the structured delay/Doppler operators for one dimension.
#[derive(Debug, Clone, Copy)]
pub struct DelayDopplerOperators {
    pub mn: usize,
}

impl DelayDopplerOperators {
    pub fn new(mn: usize) -> Self {
        Self { mn }
    }

    pub fn delay_power(&self, l: usize) -> Result<DMatrix<Complex64>> {
        delay_matrix_power(self.mn, l)
    }

    pub fn doppler_power(&self, k: f64) -> Result<DMatrix<Complex64>> {
        doppler_matrix_power(self.mn, k)
    }
}

fn check_dense(mn: usize) -> Result<()> {
    if mn > DENSE_LIMIT {
        return Err(Error::DenseTooLarge {
            mn,
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}
