//! G2MF tensor container.
//!
//! Little-endian layout: magic `G2MF` (4 bytes), version `u32 = 1`, dtype
//! `u32` (`0` = f32), rank `u32`, `rank` dims as `u32`, then the row-major
//! payload.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"G2MF";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;
pub const MAX_RANK: u32 = 8;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("offset {offset}: bad magic {found:?}")]
    BadMagic { offset: usize, found: Vec<u8> },
    #[error("offset {offset}: unsupported version {found}")]
    Version { offset: usize, found: u32 },
    #[error("offset {offset}: unsupported dtype {found}")]
    Dtype { offset: usize, found: u32 },
    #[error("offset {offset}: rank {found} exceeds {MAX_RANK}")]
    Rank { offset: usize, found: u32 },
    #[error("offset {offset}: dims {dims:?} overflow the element count")]
    DimsOverflow { offset: usize, dims: Vec<u64> },
    #[error("offset {offset}: truncated, needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("offset {offset}: {extra} trailing bytes after payload")]
    Trailing { offset: usize, extra: usize },
    #[error("offset {offset}: non-finite value")]
    NonFinite { offset: usize },
    #[error("tensor has {values} values but dims {dims:?}")]
    Shape { values: usize, dims: Vec<usize> },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Dense f32 tensor with row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, FormatError> {
        let expected = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if expected != Some(data.len()) || dims.len() > MAX_RANK as usize {
            return Err(FormatError::Shape {
                values: data.len(),
                dims,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&DTYPE_F32.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(4)?;
        if magic != MAGIC {
            return Err(FormatError::BadMagic {
                offset: 0,
                found: magic.to_vec(),
            });
        }
        let version = cursor.u32()?;
        if version != VERSION {
            return Err(FormatError::Version {
                offset: 4,
                found: version,
            });
        }
        let dtype = cursor.u32()?;
        if dtype != DTYPE_F32 {
            return Err(FormatError::Dtype {
                offset: 8,
                found: dtype,
            });
        }
        let rank = cursor.u32()?;
        if rank > MAX_RANK {
            return Err(FormatError::Rank {
                offset: 12,
                found: rank,
            });
        }
        let dims_offset = cursor.pos;
        let dims = (0..rank).map(|_| cursor.u32().map(u64::from)).collect::<Result<Vec<_>, _>>()?;
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c.checked_mul(4).is_some_and(|b| b <= usize::MAX as u64))
            .ok_or_else(|| FormatError::DimsOverflow {
                offset: dims_offset,
                dims: dims.clone(),
            })? as usize;
        let payload_offset = cursor.pos;
        let payload = cursor.take(count * 4)?;
        if cursor.pos != bytes.len() {
            return Err(FormatError::Trailing {
                offset: cursor.pos,
                extra: bytes.len() - cursor.pos,
            });
        }
        let mut data = Vec::with_capacity(count);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(FormatError::NonFinite {
                    offset: payload_offset + 4 * i,
                });
            }
            data.push(v);
        }
        Ok(Self {
            dims: dims.into_iter().map(|d| d as usize).collect(),
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        fs::write(path, self.encode()).map_err(|source| FormatError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let bytes = fs::read(path).map_err(|source| FormatError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: len - (self.bytes.len() - self.pos.min(self.bytes.len())),
            });
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
