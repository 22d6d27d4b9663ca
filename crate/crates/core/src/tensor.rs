//! Activation tensors: the in-memory type, the `ACTV` binary format, and a
//! seeded synthetic generator that mimics first-layer activation dumps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::rng::SplitMix64;

pub const ACTV_MAGIC: [u8; 4] = *b"ACTV";
pub const ACTV_VERSION: u16 = 1;
pub const ACTV_DTYPE_F32: u8 = 0;
/// magic(4) + version(2) + dtype(1) + reserved(1) + S(4) + D(4)
pub const ACTV_HEADER_BYTES: usize = 16;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic: expected \"ACTV\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("declared dimensions {rows}x{cols} exceed file payload of {payload_bytes} bytes")]
    DimensionOverflow {
        rows: u32,
        cols: u32,
        payload_bytes: u64,
    },
    #[error("non-finite value at flat index {0}")]
    NonFiniteValue(usize),
    #[error("dimensions must be at least 1x1, got {rows}x{cols}")]
    EmptyDimensions { rows: usize, cols: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLengthMismatch { rows: usize, cols: usize, len: usize },
    #[error("invalid synthetic spec: mode_count {modes} exceeds {rows}x{cols}/4")]
    InvalidSpec { modes: usize, rows: usize, cols: usize },
    #[error("io failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Real-valued S x D activation tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    pub origin_tag: Option<String>,
}

impl ActivationMatrix {
    /// Builds a matrix, rejecting empty shapes, length mismatches, and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, TensorError> {
        if rows == 0 || cols == 0 {
            return Err(TensorError::EmptyDimensions { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(TensorError::DataLengthMismatch {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFiniteValue(i));
        }
        Ok(Self {
            rows,
            cols,
            data,
            origin_tag: None,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols]).expect("zero matrix is always valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, s: usize, d: usize) -> f32 {
        self.data[s * self.cols + d]
    }

    /// sqrt of the sum of squared entries, accumulated in f64.
    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| v as f64 * v as f64)
            .sum::<f64>()
            .sqrt()
    }
}

/// Parameters for the synthetic activation generator.
///
/// Signals are sums of `mode_count` 2D cosines with frequency indices drawn
/// from {0..3} x {0..3}, amplitudes decaying as (1+u+v)^-beta, plus white
/// Gaussian noise. Fully determined by `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub mode_count: usize,
    pub decay_exponent: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(mode_count: usize, decay_exponent: f64, noise_sigma: f64, seed: u64) -> Self {
        Self {
            mode_count,
            decay_exponent,
            noise_sigma,
            seed,
        }
    }
}

/// Largest frequency index (inclusive) used for synthetic modes. Keeping
/// modes in {0..3}^2 makes every fixture compressible at all tested ratios.
pub const SYNTH_MAX_FREQ: u64 = 3;

/// Generates a deterministic synthetic activation matrix.
pub fn generate_synthetic(
    rows: usize,
    cols: usize,
    spec: &SynthSpec,
) -> Result<ActivationMatrix, TensorError> {
    if rows == 0 || cols == 0 {
        return Err(TensorError::EmptyDimensions { rows, cols });
    }
    if spec.mode_count > rows * cols / 4 {
        return Err(TensorError::InvalidSpec {
            modes: spec.mode_count,
            rows,
            cols,
        });
    }

    struct Mode {
        u: f64,
        v: f64,
        amp: f64,
        phase: f64,
    }

    let mut rng = SplitMix64::stream(spec.seed, 0);
    let modes: Vec<Mode> = (0..spec.mode_count)
        .map(|_| {
            let u = rng.next_below(SYNTH_MAX_FREQ + 1);
            let v = rng.next_below(SYNTH_MAX_FREQ + 1);
            let gain = rng.next_gaussian();
            let phase = 2.0 * std::f64::consts::PI * rng.next_f64();
            Mode {
                u: u as f64,
                v: v as f64,
                amp: (1.0 + (u + v) as f64).powf(-spec.decay_exponent) * gain,
                phase,
            }
        })
        .collect();

    let mut noise = SplitMix64::stream(spec.seed, 1);
    let mut data = Vec::with_capacity(rows * cols);
    let two_pi = 2.0 * std::f64::consts::PI;
    for s in 0..rows {
        for d in 0..cols {
            let mut x = 0.0f64;
            for m in &modes {
                let arg = two_pi * (m.u * s as f64 / rows as f64 + m.v * d as f64 / cols as f64)
                    + m.phase;
                x += m.amp * arg.cos();
            }
            if spec.noise_sigma > 0.0 {
                x += spec.noise_sigma * noise.next_gaussian();
            }
            data.push(x as f32);
        }
    }
    ActivationMatrix::new(rows, cols, data)
}

/// Reads an `ACTV` file. See the format notes on [`store_activation`].
pub fn load_activation(path: impl AsRef<Path>) -> Result<ActivationMatrix, TensorError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = [0u8; ACTV_HEADER_BYTES];
    reader.read_exact(&mut header)?;

    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != ACTV_MAGIC {
        return Err(TensorError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
    if version != ACTV_VERSION {
        return Err(TensorError::UnsupportedVersion(version));
    }
    if header[6] != ACTV_DTYPE_F32 {
        return Err(TensorError::UnsupportedDtype(header[6]));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap());

    let expected = rows as u64 * cols as u64 * 4;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if (payload.len() as u64) < expected {
        return Err(TensorError::DimensionOverflow {
            rows,
            cols,
            payload_bytes: payload.len() as u64,
        });
    }

    let data: Vec<f32> = payload[..expected as usize]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ActivationMatrix::new(rows as usize, cols as usize, data)
}

/// Writes the `ACTV` format (little-endian): magic "ACTV", version u16 = 1,
/// dtype u8 = 0 (f32), reserved u8 = 0, S u32, D u32, then S*D f32 values
/// row-major.
pub fn store_activation(a: &ActivationMatrix, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&ACTV_MAGIC)?;
    w.write_all(&ACTV_VERSION.to_le_bytes())?;
    w.write_all(&[ACTV_DTYPE_F32, 0])?;
    w.write_all(&(a.rows as u32).to_le_bytes())?;
    w.write_all(&(a.cols as u32).to_le_bytes())?;
    for &v in &a.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}
