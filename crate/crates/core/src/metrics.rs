//! Reconstruction error, spectral energy accounting, token similarity, and
//! the equal-budget codec sweep.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{
    compress_lowrank, compress_topk, decompress_lowrank, decompress_topk, LowRankMethod,
};
use crate::fourier::{
    choose_cutoffs, compress_fourier_with_cutoffs, decompress_fourier, passband_mask,
    RetentionMode,
};
use crate::spectral::{fft2, Spectrum};
use crate::tensor::ActivationMatrix;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("reference matrix is zero but test matrix is not")]
    ZeroReference,
    #[error("mask index ({0}, {1}) outside {2}x{3} spectrum")]
    IndexOutOfRange(usize, usize, usize, usize),
    #[error("need at least 2 nonzero token rows, found {0}")]
    TooFewTokens(usize),
    #[error("codec failed at ratio {ratio}: {message}")]
    CodecFailure { ratio: f64, message: String },
}

/// Relative Frobenius error ||A - A'|| / ||A||. Zero when both matrices are
/// zero; an all-zero reference against a nonzero test is an error.
pub fn reconstruction_error(
    reference: &ActivationMatrix,
    test: &ActivationMatrix,
) -> Result<f64, MetricsError> {
    if reference.rows() != test.rows() || reference.cols() != test.cols() {
        return Err(MetricsError::DimensionMismatch(
            reference.rows(),
            reference.cols(),
            test.rows(),
            test.cols(),
        ));
    }
    let ref_norm = reference.frobenius_norm();
    let diff_sq: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    if ref_norm == 0.0 {
        return if diff_sq == 0.0 {
            Ok(0.0)
        } else {
            Err(MetricsError::ZeroReference)
        };
    }
    Ok(diff_sq.sqrt() / ref_norm)
}

/// Fraction of spectral energy inside the mask. 1 for a zero spectrum by
/// convention.
pub fn energy_captured(spec: &Spectrum, mask: &[(usize, usize)]) -> Result<f64, MetricsError> {
    let mut masked = 0.0f64;
    for &(u, v) in mask {
        if u >= spec.rows() || v >= spec.cols() {
            return Err(MetricsError::IndexOutOfRange(
                u,
                v,
                spec.rows(),
                spec.cols(),
            ));
        }
        masked += spec.at(u, v).norm_sqr();
    }
    let total = spec.total_energy();
    if total == 0.0 {
        return Ok(1.0);
    }
    Ok(masked / total)
}

/// Mean pairwise cosine similarity between token rows. Zero rows are
/// skipped; fewer than two usable rows is an error.
pub fn token_similarity(a: &ActivationMatrix) -> Result<f64, MetricsError> {
    let rows: Vec<(usize, f64)> = (0..a.rows())
        .map(|s| {
            let norm_sq: f64 = (0..a.cols())
                .map(|d| (a.get(s, d) as f64).powi(2))
                .sum();
            (s, norm_sq.sqrt())
        })
        .filter(|&(_, n)| n > 0.0)
        .collect();
    if rows.len() < 2 {
        return Err(MetricsError::TooFewTokens(rows.len()));
    }
    let mut sum = 0.0f64;
    let mut pairs = 0usize;
    for (i, &(s_i, n_i)) in rows.iter().enumerate() {
        for &(s_j, n_j) in &rows[i + 1..] {
            let dot: f64 = (0..a.cols())
                .map(|d| a.get(s_i, d) as f64 * a.get(s_j, d) as f64)
                .sum();
            sum += dot / (n_i * n_j);
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Cumulative low-frequency energy curve: for t = 1..steps, the energy
/// fraction inside the corner passband with cutoffs ceil(t*S/steps),
/// ceil(t*D/steps). The final point is always 1.
pub fn spectral_profile(a: &ActivationMatrix, steps: usize) -> Vec<(f64, f64)> {
    assert!(steps >= 1);
    let spec = fft2(a);
    (1..=steps)
        .map(|t| {
            let keep_rows = (t * a.rows()).div_ceil(steps);
            let keep_cols = (t * a.cols()).div_ceil(steps);
            let mask = passband_mask(a.rows(), a.cols(), keep_rows, keep_cols, RetentionMode::Corner);
            let fraction = energy_captured(&spec, &mask).expect("mask indices in range");
            (t as f64 / steps as f64, fraction)
        })
        .collect()
}

/// Which codec a sweep cell ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecId {
    Fourier,
    TopK,
    Svd,
    Qr,
}

impl CodecId {
    pub fn name(self) -> &'static str {
        match self {
            CodecId::Fourier => "fourier",
            CodecId::TopK => "topk",
            CodecId::Svd => "svd",
            CodecId::Qr => "qr",
        }
    }
}

/// One (codec, ratio) measurement of the sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub codec: CodecId,
    pub ratio_requested: f64,
    pub byte_budget: usize,
    pub ratio_achieved: f64,
    pub rel_error: f64,
    pub wall_time_compress_s: f64,
    pub wall_time_decompress_s: f64,
}

/// Timing policy: median of 5 runs after one warm-up.
fn timed<T>(mut op: impl FnMut() -> T) -> (T, f64) {
    let mut result = op();
    let mut times = Vec::with_capacity(5);
    for _ in 0..5 {
        let start = Instant::now();
        result = op();
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (result, times[2])
}

fn run_cell(
    a: &ActivationMatrix,
    codec: CodecId,
    ratio: f64,
    mode: RetentionMode,
) -> Result<SweepRow, MetricsError> {
    let fail = |message: String| MetricsError::CodecFailure { ratio, message };
    // All codecs share the byte budget the frequency codec actually uses at
    // this ratio, so every cell at one ratio is budget-comparable.
    let (keep_rows, keep_cols) =
        choose_cutoffs(a.rows(), a.cols(), ratio).map_err(|e| fail(e.to_string()))?;
    let byte_budget = 8 * keep_rows * keep_cols;
    let original_bytes = (a.rows() * a.cols() * 4) as f64;

    let (payload_bytes, reconstructed, t_comp, t_dec) = match codec {
        CodecId::Fourier => {
            let (p, t_comp) =
                timed(|| compress_fourier_with_cutoffs(a, keep_rows, keep_cols, mode));
            let p = p.map_err(|e| fail(e.to_string()))?;
            let (back, t_dec) = timed(|| decompress_fourier(&p));
            (p.payload_bytes(), back.map_err(|e| fail(e.to_string()))?, t_comp, t_dec)
        }
        CodecId::TopK => {
            let (p, t_comp) = timed(|| compress_topk(a, byte_budget));
            let p = p.map_err(|e| fail(e.to_string()))?;
            let (back, t_dec) = timed(|| decompress_topk(&p));
            (p.payload_bytes(), back.map_err(|e| fail(e.to_string()))?, t_comp, t_dec)
        }
        CodecId::Svd | CodecId::Qr => {
            let method = if codec == CodecId::Svd {
                LowRankMethod::Svd
            } else {
                LowRankMethod::Qr
            };
            let (p, t_comp) = timed(|| compress_lowrank(a, byte_budget, method));
            let p = p.map_err(|e| fail(e.to_string()))?;
            let (back, t_dec) = timed(|| decompress_lowrank(&p));
            (p.payload_bytes(), back.map_err(|e| fail(e.to_string()))?, t_comp, t_dec)
        }
    };

    Ok(SweepRow {
        codec,
        ratio_requested: ratio,
        byte_budget,
        ratio_achieved: original_bytes / payload_bytes as f64,
        rel_error: reconstruction_error(a, &reconstructed)?,
        wall_time_compress_s: t_comp,
        wall_time_decompress_s: t_dec,
    })
}

/// Runs every (codec, ratio) cell at identical byte budgets. Cells fan out
/// across threads; output order is deterministic.
pub fn ratio_sweep(
    a: &ActivationMatrix,
    codecs: &[CodecId],
    ratios: &[f64],
    mode: RetentionMode,
) -> Result<Vec<SweepRow>, MetricsError> {
    let cells: Vec<(CodecId, f64)> = codecs
        .iter()
        .flat_map(|&c| ratios.iter().map(move |&r| (c, r)))
        .collect();
    cells
        .into_par_iter()
        .map(|(codec, ratio)| run_cell(a, codec, ratio, mode))
        .collect()
}

/// Sweep rows as CSV with 9 significant digits.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("codec,ratio_requested,ratio_achieved,rel_error,t_compress_s,t_decompress_s\n");
    for row in rows {
        out.push_str(&format!(
            "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
            row.codec.name(),
            row.ratio_requested,
            row.ratio_achieved,
            row.rel_error,
            row.wall_time_compress_s,
            row.wall_time_decompress_s,
        ));
    }
    out
}
