//! CATF: row-major little-endian f32 feature matrices.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CATF"
//! 4       2     format version (u16 LE, currently 1)
//! 6       4     dim (u32 LE, >= 1)
//! 10      8     n_frames (u64 LE)
//! 18      4*dim*n_frames  payload
//! ```

use std::path::Path;

use super::write_bytes;
use crate::error::{Error, Result};

pub const CATF_MAGIC: &[u8; 4] = b"CATF";
pub const CATF_VERSION: u16 = 1;
const HEADER_LEN: usize = 18;

/// Dense `n_frames x dim` matrix of finite f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dim must be >= 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fill rows of dim {dim}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or(Error::Empty("feature rows"))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    /// A matrix with zero frames.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Rows `indices` in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            data,
        }
    }

    /// Stacks matrices vertically.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<Self> {
        let dim = parts.first().map(|p| p.dim).ok_or(Error::Empty("feature parts"))?;
        let mut data = Vec::new();
        for p in parts {
            if p.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.dim,
                });
            }
            data.extend_from_slice(&p.data);
        }
        Ok(Self { dim, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(CATF_MAGIC);
        out.extend_from_slice(&CATF_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_frames() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes and validates a CATF buffer.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "CATF";
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(
                WHAT,
                format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
            ));
        }
        if &bytes[0..4] != CATF_MAGIC {
            return Err(Error::format(WHAT, format!("bad magic {:?}", &bytes[0..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CATF_VERSION {
            return Err(Error::format(WHAT, format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let n_frames = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
        if dim == 0 {
            return Err(Error::format(WHAT, "dim is zero"));
        }
        let payload = &bytes[HEADER_LEN..];
        let expected = usize::try_from(n_frames)
            .ok()
            .and_then(|n| n.checked_mul(dim))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(WHAT, format!("{n_frames} frames of dim {dim} overflow")))?;
        if payload.len() < expected {
            return Err(Error::format(
                WHAT,
                format!(
                    "truncated payload: header declares {n_frames} frames ({expected} bytes), found {} bytes",
                    payload.len()
                ),
            ));
        }
        if payload.len() > expected {
            return Err(Error::format(
                WHAT,
                format!("{} trailing bytes after payload", payload.len() - expected),
            ));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(WHAT, format!("non-finite value at index {index}")));
        }
        Ok(Self { dim, data })
    }
}

pub fn write_feature_file(path: impl AsRef<Path>, matrix: &FeatureMatrix) -> Result<()> {
    write_bytes(path.as_ref(), &matrix.to_bytes())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::from_bytes(&bytes)
}
