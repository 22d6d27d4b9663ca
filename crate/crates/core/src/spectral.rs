//! 2D forward/inverse transforms in double precision.
//!
//! Convention: unnormalized forward, 1/(S*D) on the inverse. The fast path
//! runs rustfft row/column passes (mixed radix, any S and D); `dft2_oracle`
//! is the literal quadratic double sum kept as an independent reference.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use thiserror::Error;

use crate::tensor::ActivationMatrix;

/// Quadratic-cost guard for the brute-force reference transform.
pub const ORACLE_MAX_ELEMS: usize = 4096;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix of {0} elements exceeds the {ORACLE_MAX_ELEMS}-element oracle guard")]
    TooLargeForOracle(usize),
    #[error("dimension mismatch: matrix is {a_rows}x{a_cols}, spectrum is {s_rows}x{s_cols}")]
    DimensionMismatch {
        a_rows: usize,
        a_cols: usize,
        s_rows: usize,
        s_cols: usize,
    },
}

/// Complex S x D frequency-domain matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    rows: usize,
    cols: usize,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(rows: usize, cols: usize, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), rows * cols);
        Self { rows, cols, coeffs }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![Complex64::ZERO; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> Complex64 {
        self.coeffs[u * self.cols + v]
    }

    #[inline]
    pub fn at_mut(&mut self, u: usize, v: usize) -> &mut Complex64 {
        &mut self.coeffs[u * self.cols + v]
    }

    /// Sum of squared coefficient magnitudes.
    pub fn total_energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

thread_local! {
    // Plans (and their twiddle tables) are reused across calls; replanning
    // per transform costs more than the small sizes it serves.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform_2d(rows: usize, cols: usize, buf: &mut [Complex64], direction: FftDirection) {
    let (row_fft, col_fft): (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft(cols, direction), p.plan_fft(rows, direction))
    });
    let scratch_len = row_fft
        .get_inplace_scratch_len()
        .max(col_fft.get_inplace_scratch_len());
    let mut fft_scratch = vec![Complex64::ZERO; scratch_len];

    for row in buf.chunks_exact_mut(cols) {
        row_fft.process_with_scratch(row, &mut fft_scratch);
    }

    // The column pass runs on a transposed copy so every FFT reads
    // contiguous memory; tiled transposes keep the strided traffic
    // cache-resident on matrices that outgrow L2.
    let mut transposed = vec![Complex64::ZERO; rows * cols];
    transpose_tiled(buf, &mut transposed, rows, cols);
    for column in transposed.chunks_exact_mut(rows) {
        col_fft.process_with_scratch(column, &mut fft_scratch);
    }
    transpose_tiled(&transposed, buf, cols, rows);
}

/// dst (src_cols x src_rows) = transpose of src (src_rows x src_cols),
/// walked in 32x32 tiles.
fn transpose_tiled(src: &[Complex64], dst: &mut [Complex64], src_rows: usize, src_cols: usize) {
    const TILE: usize = 32;
    for r0 in (0..src_rows).step_by(TILE) {
        for c0 in (0..src_cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(src_rows) {
                for c in c0..(c0 + TILE).min(src_cols) {
                    dst[c * src_rows + r] = src[r * src_cols + c];
                }
            }
        }
    }
}

/// Forward 2D transform of a real matrix (unnormalized).
pub fn fft2(a: &ActivationMatrix) -> Spectrum {
    let (rows, cols) = (a.rows(), a.cols());
    let mut buf: Vec<Complex64> = a
        .data()
        .iter()
        .map(|&v| Complex64::new(v as f64, 0.0))
        .collect();
    transform_2d(rows, cols, &mut buf, FftDirection::Forward);
    Spectrum::new(rows, cols, buf)
}

/// Inverse 2D transform with the 1/(S*D) factor. Returns the full complex
/// matrix; callers working with symmetrized spectra take the real part.
pub fn ifft2(spec: &Spectrum) -> Vec<Complex64> {
    let (rows, cols) = (spec.rows(), spec.cols());
    let mut buf = spec.coeffs().to_vec();
    transform_2d(rows, cols, &mut buf, FftDirection::Inverse);
    let scale = 1.0 / (rows * cols) as f64;
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

/// Forward transform evaluated only at the bins (u, v) for u in `us`,
/// v in `vs`, returned in product order (u outer). Runs the full row pass,
/// then column FFTs for just the requested columns — exact, but skips the
/// work the codec would discard anyway.
pub(crate) fn forward_bins(a: &ActivationMatrix, us: &[usize], vs: &[usize]) -> Vec<Complex64> {
    let (rows, cols) = (a.rows(), a.cols());
    let (row_fft, col_fft): (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (
            p.plan_fft(cols, FftDirection::Forward),
            p.plan_fft(rows, FftDirection::Forward),
        )
    });
    let mut fft_scratch = vec![
        Complex64::ZERO;
        row_fft
            .get_inplace_scratch_len()
            .max(col_fft.get_inplace_scratch_len())
    ];

    let mut buf: Vec<Complex64> = a
        .data()
        .iter()
        .map(|&v| Complex64::new(v as f64, 0.0))
        .collect();
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process_with_scratch(row, &mut fft_scratch);
    }

    // Gather the requested columns contiguously (one sequential sweep over
    // the buffer), transform them, then sample the requested rows.
    let mut columns = vec![Complex64::ZERO; vs.len() * rows];
    for u in 0..rows {
        let row = &buf[u * cols..(u + 1) * cols];
        for (j, &v) in vs.iter().enumerate() {
            columns[j * rows + u] = row[v];
        }
    }
    for column in columns.chunks_exact_mut(rows) {
        col_fft.process_with_scratch(column, &mut fft_scratch);
    }

    let mut out = Vec::with_capacity(us.len() * vs.len());
    for &u in us {
        for j in 0..vs.len() {
            out.push(columns[j * rows + u]);
        }
    }
    out
}

/// Inverse transform of a spectrum that is zero outside the columns listed
/// in `vs_full`. `compact` holds those columns contiguously (column j is
/// the length-`rows` slice for frequency column `vs_full[j]`) and is
/// consumed in place. Returns the full complex matrix including the
/// 1/(S*D) factor.
pub(crate) fn inverse_pruned(
    rows: usize,
    cols: usize,
    compact: &mut [Complex64],
    vs_full: &[usize],
) -> Vec<Complex64> {
    debug_assert_eq!(compact.len(), vs_full.len() * rows);
    let (row_fft, col_fft): (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (
            p.plan_fft(cols, FftDirection::Inverse),
            p.plan_fft(rows, FftDirection::Inverse),
        )
    });
    let mut fft_scratch = vec![
        Complex64::ZERO;
        row_fft
            .get_inplace_scratch_len()
            .max(col_fft.get_inplace_scratch_len())
    ];

    for column in compact.chunks_exact_mut(rows) {
        col_fft.process_with_scratch(column, &mut fft_scratch);
    }

    let mut out = vec![Complex64::ZERO; rows * cols];
    for u in 0..rows {
        let row = &mut out[u * cols..(u + 1) * cols];
        for (j, &v) in vs_full.iter().enumerate() {
            row[v] = compact[j * rows + u];
        }
        row_fft.process_with_scratch(row, &mut fft_scratch);
    }
    let scale = 1.0 / (rows * cols) as f64;
    for c in &mut out {
        *c *= scale;
    }
    out
}

/// Brute-force evaluation of the forward transform as a double sum.
/// O((S*D)^2); guarded so tests cannot accidentally run it on large inputs.
pub fn dft2_oracle(a: &ActivationMatrix) -> Result<Spectrum, SpectralError> {
    let (rows, cols) = (a.rows(), a.cols());
    let n = rows * cols;
    if n > ORACLE_MAX_ELEMS {
        return Err(SpectralError::TooLargeForOracle(n));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut coeffs = Vec::with_capacity(n);
    for u in 0..rows {
        for v in 0..cols {
            let mut acc = Complex64::ZERO;
            for s in 0..rows {
                for d in 0..cols {
                    let angle =
                        -two_pi * (u as f64 * s as f64 / rows as f64 + v as f64 * d as f64 / cols as f64);
                    acc += a.get(s, d) as f64 * Complex64::new(angle.cos(), angle.sin());
                }
            }
            coeffs.push(acc);
        }
    }
    Ok(Spectrum::new(rows, cols, coeffs))
}

/// Relative residual of the energy identity sum(a^2) = sum(|A|^2)/(S*D).
/// Zero matrix returns 0 by convention.
pub fn parseval_residual(a: &ActivationMatrix, spec: &Spectrum) -> Result<f64, SpectralError> {
    if a.rows() != spec.rows() || a.cols() != spec.cols() {
        return Err(SpectralError::DimensionMismatch {
            a_rows: a.rows(),
            a_cols: a.cols(),
            s_rows: spec.rows(),
            s_cols: spec.cols(),
        });
    }
    let spatial: f64 = a.data().iter().map(|&v| v as f64 * v as f64).sum();
    if spatial == 0.0 {
        return Ok(0.0);
    }
    let spectral = spec.total_energy() / (a.rows() * a.cols()) as f64;
    Ok((spatial - spectral).abs() / spatial)
}
