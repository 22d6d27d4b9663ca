//! Frequency-domain codec: cutoff selection from a target byte ratio,
//! low-frequency block retention, and symmetry-aware reconstruction.

use std::collections::HashSet;

use num_complex::{Complex32, Complex64};
use thiserror::Error;

use crate::spectral::{forward_bins, inverse_pruned};
use crate::tensor::ActivationMatrix;

#[derive(Debug, Error)]
pub enum FourierCodecError {
    #[error("target ratio must exceed 1, got {0}")]
    RatioNotAboveOne(f64),
    #[error("ratio {ratio} infeasible for {rows}x{cols}: not even one complex coefficient fits")]
    RatioInfeasible { rows: usize, cols: usize, ratio: f64 },
    #[error("non-finite value in input")]
    NonFiniteValue,
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
}

/// Which part of the spectrum the retained block covers.
///
/// `Corner` keeps the literal top-left block. `Centered` keeps low
/// frequencies in both signed directions (wrap-around corners), the standard
/// 2D low-pass support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetentionMode {
    Corner,
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecConfig {
    pub target_ratio: f64,
    pub retention_mode: RetentionMode,
}

impl CodecConfig {
    pub fn new(target_ratio: f64, retention_mode: RetentionMode) -> Result<Self, FourierCodecError> {
        if target_ratio.is_nan() || target_ratio <= 1.0 {
            return Err(FourierCodecError::RatioNotAboveOne(target_ratio));
        }
        Ok(Self {
            target_ratio,
            retention_mode,
        })
    }
}

/// Serialized frequency-domain payload: the retained block as f32 pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierPayload {
    pub rows: usize,
    pub cols: usize,
    pub keep_rows: usize,
    pub keep_cols: usize,
    pub mode: RetentionMode,
    /// keep_rows * keep_cols coefficients, row-major over the retained
    /// index set (for `Centered`, in the order produced by `retained_indices`).
    pub coeffs: Vec<Complex32>,
}

impl FourierPayload {
    /// Coefficient bytes only (two f32 per retained coefficient).
    pub fn payload_bytes(&self) -> usize {
        self.coeffs.len() * 8
    }

    pub fn achieved_ratio(&self) -> f64 {
        (self.rows * self.cols * 4) as f64 / self.payload_bytes() as f64
    }
}

/// Selects the retained block dimensions for a target byte ratio.
///
/// Both cutoffs shrink by the same 1/sqrt(2r) factor (the 2 pays for the
/// two reals per complex coefficient), floored, with a clamp to 1 and a
/// recompute of the other cutoff when a dimension is too small. The
/// retained block never exceeds the byte budget, so the achieved ratio is
/// always >= the requested one.
pub fn choose_cutoffs(
    rows: usize,
    cols: usize,
    ratio: f64,
) -> Result<(usize, usize), FourierCodecError> {
    if ratio.is_nan() || ratio <= 1.0 {
        return Err(FourierCodecError::RatioNotAboveOne(ratio));
    }
    let elems = rows as f64 * cols as f64;
    if elems < 2.0 * ratio {
        return Err(FourierCodecError::RatioInfeasible { rows, cols, ratio });
    }
    let shrink = (2.0 * ratio).sqrt();
    let k_rows = (rows as f64 / shrink).floor() as usize;
    let k_cols = (cols as f64 / shrink).floor() as usize;
    let budget_coeffs = |fixed: usize| -> usize {
        ((elems / (2.0 * ratio * fixed as f64)).floor() as usize).max(1)
    };
    let (k_rows, k_cols) = match (k_rows, k_cols) {
        (0, 0) => {
            // Both dims below sqrt(2r) implies elems < 2r, caught above.
            unreachable!("both cutoffs clamped despite feasible ratio")
        }
        (0, _) => (1, budget_coeffs(1)),
        (_, 0) => (budget_coeffs(1), 1),
        (kr, kc) => (kr, kc),
    };
    Ok((k_rows.min(rows), k_cols.min(cols)))
}

/// Frequency indices along one axis of length `n` for a cutoff `k`.
fn axis_indices(n: usize, k: usize, mode: RetentionMode) -> Vec<usize> {
    match mode {
        RetentionMode::Corner => (0..k).collect(),
        RetentionMode::Centered => {
            let pos = k.div_ceil(2);
            let neg = k / 2;
            (0..pos).chain(n - neg..n).collect()
        }
    }
}

/// The exact retained index set, row-major over (u, v) in block order.
pub fn retained_indices(
    rows: usize,
    cols: usize,
    keep_rows: usize,
    keep_cols: usize,
    mode: RetentionMode,
) -> Vec<(usize, usize)> {
    let us = axis_indices(rows, keep_rows, mode);
    let vs = axis_indices(cols, keep_cols, mode);
    us.iter()
        .flat_map(|&u| vs.iter().map(move |&v| (u, v)))
        .collect()
}

/// All bins nonzero after decoder-side symmetrization: the retained set
/// plus the conjugate mirror of every retained bin.
pub fn passband_mask(
    rows: usize,
    cols: usize,
    keep_rows: usize,
    keep_cols: usize,
    mode: RetentionMode,
) -> Vec<(usize, usize)> {
    let retained = retained_indices(rows, cols, keep_rows, keep_cols, mode);
    let mut seen: HashSet<(usize, usize)> = retained.iter().copied().collect();
    let mut mask = retained;
    for i in 0..mask.len() {
        let (u, v) = mask[i];
        let mirror = ((rows - u) % rows, (cols - v) % cols);
        if seen.insert(mirror) {
            mask.push(mirror);
        }
    }
    mask
}

/// Transforms, samples the retention set, and rounds coefficients to f32.
pub fn compress_fourier(
    a: &ActivationMatrix,
    cfg: &CodecConfig,
) -> Result<FourierPayload, FourierCodecError> {
    let (keep_rows, keep_cols) = choose_cutoffs(a.rows(), a.cols(), cfg.target_ratio)?;
    compress_fourier_with_cutoffs(a, keep_rows, keep_cols, cfg.retention_mode)
}

/// Compression with explicit cutoffs. Used by tests that need full-block
/// retention, which no r > 1 config can request.
pub fn compress_fourier_with_cutoffs(
    a: &ActivationMatrix,
    keep_rows: usize,
    keep_cols: usize,
    mode: RetentionMode,
) -> Result<FourierPayload, FourierCodecError> {
    let us = axis_indices(a.rows(), keep_rows, mode);
    let vs = axis_indices(a.cols(), keep_cols, mode);
    let coeffs: Vec<Complex32> = forward_bins(a, &us, &vs)
        .into_iter()
        .map(|c| Complex32::new(c.re as f32, c.im as f32))
        .collect();
    if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(FourierCodecError::NonFiniteValue);
    }
    Ok(FourierPayload {
        rows: a.rows(),
        cols: a.cols(),
        keep_rows,
        keep_cols,
        mode,
        coeffs,
    })
}

/// Rebuilds the zero-padded spectrum, restores conjugate mirrors, inverts,
/// and returns the real part.
///
/// Transmitted bins are never overwritten; self-conjugate bins (DC and
/// Nyquist lines) are forced real before inversion. The imaginary residue
/// of the inverse transform is analytically zero after symmetrization and
/// only measures transform noise.
pub fn decompress_fourier(p: &FourierPayload) -> Result<ActivationMatrix, FourierCodecError> {
    if p.keep_rows == 0 || p.keep_rows > p.rows || p.keep_cols == 0 || p.keep_cols > p.cols {
        return Err(FourierCodecError::CorruptPayload(format!(
            "retained block {}x{} does not fit {}x{}",
            p.keep_rows, p.keep_cols, p.rows, p.cols
        )));
    }
    let retained = retained_indices(p.rows, p.cols, p.keep_rows, p.keep_cols, p.mode);
    if retained.len() != p.coeffs.len() {
        return Err(FourierCodecError::CorruptPayload(format!(
            "expected {} coefficients, got {}",
            retained.len(),
            p.coeffs.len()
        )));
    }

    let retained_set: HashSet<(usize, usize)> = retained.iter().copied().collect();

    // Only columns in the retained set or its mirrors can be nonzero, so the
    // spectrum is kept in compact column-major form and inverted through the
    // pruned path.
    let vs = axis_indices(p.cols, p.keep_cols, p.mode);
    let mut vs_full: Vec<usize> = vs.iter().flat_map(|&v| [v, (p.cols - v) % p.cols]).collect();
    vs_full.sort_unstable();
    vs_full.dedup();
    let mut v_slot = vec![usize::MAX; p.cols];
    for (j, &v) in vs_full.iter().enumerate() {
        v_slot[v] = j;
    }

    let mut compact = vec![Complex64::new(0.0, 0.0); vs_full.len() * p.rows];
    for (&(u, v), c) in retained.iter().zip(&p.coeffs) {
        let mut value = Complex64::new(c.re as f64, c.im as f64);
        let mirror = ((p.rows - u) % p.rows, (p.cols - v) % p.cols);
        if mirror == (u, v) {
            value.im = 0.0;
        }
        compact[v_slot[v] * p.rows + u] = value;
        if mirror != (u, v) && !retained_set.contains(&mirror) {
            compact[v_slot[mirror.1] * p.rows + mirror.0] = value.conj();
        }
    }

    let complex = inverse_pruned(p.rows, p.cols, &mut compact, &vs_full);
    let data: Vec<f32> = complex.iter().map(|c| c.re as f32).collect();
    let result = ActivationMatrix::new(p.rows, p.cols, data)
        .map_err(|e| FourierCodecError::CorruptPayload(e.to_string()))?;

    let norm = result.frobenius_norm();
    let residue: f64 = complex.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
    debug_assert!(
        residue <= 1e-6 * norm.max(f64::MIN_POSITIVE),
        "imaginary residue {residue} exceeds bound for norm {norm}"
    );
    Ok(result)
}
