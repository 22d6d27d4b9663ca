//! `FCMP` container: one on-disk envelope for every codec payload.
//!
//! Layout (little-endian): magic "FCMP", version u16 = 1, codec u8
//! (0 = fourier, 1 = topk, 2 = svd, 3 = qr), mode u8 (0 = corner,
//! 1 = centered; 0 for non-fourier codecs), S u32, D u32, K_S u32, K_D u32.
//! For top-k the K_S slot carries k; for low-rank it carries the rank
//! (K_D = 0 in both cases). Payload bytes follow as documented per codec.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex32;
use thiserror::Error;

use crate::baselines::{LowRankMethod, LowRankPayload, TopKPayload};
use crate::fourier::{FourierPayload, RetentionMode};

pub const FCMP_MAGIC: [u8; 4] = *b"FCMP";
pub const FCMP_VERSION: u16 = 1;
/// magic(4) + version(2) + codec(1) + mode(1) + S(4) + D(4) + K_S(4) + K_D(4)
pub const FCMP_HEADER_BYTES: usize = 24;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic: expected \"FCMP\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("io failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Any serializable compressed form.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Fourier(FourierPayload),
    TopK(TopKPayload),
    LowRank(LowRankPayload),
}

impl Payload {
    pub fn codec_id(&self) -> u8 {
        match self {
            Payload::Fourier(_) => 0,
            Payload::TopK(_) => 1,
            Payload::LowRank(p) => match p.method {
                LowRankMethod::Svd => 2,
                LowRankMethod::Qr => 3,
            },
        }
    }

    pub fn payload_bytes(&self) -> usize {
        match self {
            Payload::Fourier(p) => p.payload_bytes(),
            Payload::TopK(p) => 4 + p.payload_bytes(),
            Payload::LowRank(p) => 4 + p.payload_bytes(),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if self.pos + n > self.bytes.len() {
            return Err(ContainerError::CorruptPayload(format!(
                "truncated: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, ContainerError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn write_payload(payload: &Payload, path: impl AsRef<Path>) -> Result<(), ContainerError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&FCMP_MAGIC)?;
    w.write_all(&FCMP_VERSION.to_le_bytes())?;
    w.write_all(&[payload.codec_id()])?;

    match payload {
        Payload::Fourier(p) => {
            let mode = match p.mode {
                RetentionMode::Corner => 0u8,
                RetentionMode::Centered => 1u8,
            };
            w.write_all(&[mode])?;
            w.write_all(&(p.rows as u32).to_le_bytes())?;
            w.write_all(&(p.cols as u32).to_le_bytes())?;
            w.write_all(&(p.keep_rows as u32).to_le_bytes())?;
            w.write_all(&(p.keep_cols as u32).to_le_bytes())?;
            for c in &p.coeffs {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
        Payload::TopK(p) => {
            w.write_all(&[0u8])?;
            w.write_all(&(p.rows as u32).to_le_bytes())?;
            w.write_all(&(p.cols as u32).to_le_bytes())?;
            w.write_all(&(p.k() as u32).to_le_bytes())?;
            w.write_all(&0u32.to_le_bytes())?;
            w.write_all(&(p.k() as u32).to_le_bytes())?;
            for &(idx, value) in &p.entries {
                w.write_all(&idx.to_le_bytes())?;
                w.write_all(&value.to_le_bytes())?;
            }
        }
        Payload::LowRank(p) => {
            w.write_all(&[0u8])?;
            w.write_all(&(p.rows as u32).to_le_bytes())?;
            w.write_all(&(p.cols as u32).to_le_bytes())?;
            w.write_all(&(p.rank as u32).to_le_bytes())?;
            w.write_all(&0u32.to_le_bytes())?;
            w.write_all(&(p.rank as u32).to_le_bytes())?;
            for &v in &p.left {
                w.write_all(&v.to_le_bytes())?;
            }
            for &v in &p.right {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_payload(path: impl AsRef<Path>) -> Result<Payload, ContainerError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() < FCMP_HEADER_BYTES {
        return Err(ContainerError::CorruptPayload("file shorter than header".into()));
    }

    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != FCMP_MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != FCMP_VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let codec = bytes[6];
    let mode = bytes[7];
    let mut cur = Cursor { bytes: &bytes, pos: 8 };
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let k_s = cur.u32()? as usize;
    let k_d = cur.u32()? as usize;

    match codec {
        0 => {
            let mode = match mode {
                0 => RetentionMode::Corner,
                1 => RetentionMode::Centered,
                m => {
                    return Err(ContainerError::CorruptPayload(format!(
                        "unknown retention mode {m}"
                    )))
                }
            };
            let count = k_s
                .checked_mul(k_d)
                .ok_or_else(|| ContainerError::CorruptPayload("cutoff overflow".into()))?;
            let mut coeffs = Vec::with_capacity(count);
            for _ in 0..count {
                let re = cur.f32()?;
                let im = cur.f32()?;
                coeffs.push(Complex32::new(re, im));
            }
            Ok(Payload::Fourier(FourierPayload {
                rows,
                cols,
                keep_rows: k_s,
                keep_cols: k_d,
                mode,
                coeffs,
            }))
        }
        1 => {
            let k = cur.u32()? as usize;
            if k != k_s {
                return Err(ContainerError::CorruptPayload(format!(
                    "header k {k_s} disagrees with payload k {k}"
                )));
            }
            let mut entries = Vec::with_capacity(k);
            for _ in 0..k {
                let idx = cur.u32()?;
                let value = cur.f32()?;
                entries.push((idx, value));
            }
            Ok(Payload::TopK(TopKPayload { rows, cols, entries }))
        }
        2 | 3 => {
            let rank = cur.u32()? as usize;
            if rank != k_s {
                return Err(ContainerError::CorruptPayload(format!(
                    "header rank {k_s} disagrees with payload rank {rank}"
                )));
            }
            let mut left = Vec::with_capacity(rows * rank);
            for _ in 0..rows * rank {
                left.push(cur.f32()?);
            }
            let mut right = Vec::with_capacity(rank * cols);
            for _ in 0..rank * cols {
                right.push(cur.f32()?);
            }
            Ok(Payload::LowRank(LowRankPayload {
                rows,
                cols,
                rank,
                method: if codec == 2 {
                    LowRankMethod::Svd
                } else {
                    LowRankMethod::Qr
                },
                left,
                right,
            }))
        }
        c => Err(ContainerError::CorruptPayload(format!("unknown codec id {c}"))),
    }
}
