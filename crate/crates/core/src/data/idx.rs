//! IDX files as used by MNIST: a big-endian magic `0x000008DD` (unsigned
//! bytes, `DD` dimensions), `DD` big-endian u32 sizes, then the raw bytes.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;

/// A parsed IDX array of unsigned bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Decoded contents of an IDX file.
#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    /// N×1×H×W, pixels scaled to [0, 1].
    Images(Tensor),
    Labels(Vec<usize>),
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, FormatError> {
    let truncated = |expected: u64| FormatError::Truncated {
        expected,
        actual: bytes.len() as u64,
    };
    if bytes.len() < 4 {
        return Err(truncated(4));
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if magic != LABELS_MAGIC && magic != IMAGES_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(truncated(header as u64));
    }
    let raw_dims: Vec<u32> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
        .collect();
    let payload = raw_dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(u64::from(d)))
        .and_then(|p| p.checked_add(header as u64))
        .filter(|&total| usize::try_from(total).is_ok())
        .ok_or_else(|| FormatError::DimensionOverflow {
            dims: raw_dims.clone(),
        })?;
    let actual = bytes.len() as u64;
    if actual < payload {
        return Err(truncated(payload));
    }
    if actual > payload {
        return Err(FormatError::TrailingBytes {
            format: "idx",
            extra: actual - payload,
        });
    }
    Ok(IdxArray {
        dims: raw_dims.iter().map(|&d| d as usize).collect(),
        data: bytes[header..].to_vec(),
    })
}

impl IdxArray {
    pub fn to_bytes(&self) -> Vec<u8> {
        let magic = match self.dims.len() {
            1 => LABELS_MAGIC,
            _ => 0x0000_0800 | self.dims.len() as u32,
        };
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&magic.to_be_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    /// Images as N×1×H×W with pixels divided by 255.
    pub fn to_images(&self) -> Result<Tensor, FormatError> {
        if self.dims.len() != 3 {
            return Err(FormatError::Rank {
                expected: 3,
                dims: self.dims.clone(),
            });
        }
        let shape = vec![self.dims[0], 1, self.dims[1], self.dims[2]];
        let data = self.data.iter().map(|&b| f64::from(b) / 255.0).collect();
        Ok(Tensor::from_parts(shape, data))
    }

    pub fn to_labels(&self) -> Result<Vec<usize>, FormatError> {
        if self.dims.len() != 1 {
            return Err(FormatError::Rank {
                expected: 1,
                dims: self.dims.clone(),
            });
        }
        Ok(self.data.iter().map(|&b| b as usize).collect())
    }
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_idx(&bytes)?)
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxData> {
    let arr = read_idx(path)?;
    Ok(if arr.dims.len() == 1 {
        IdxData::Labels(arr.to_labels()?)
    } else {
        IdxData::Images(arr.to_images()?)
    })
}

/// Pairs an image file with a label file; labels must be digits 0–9.
pub fn load_mnist(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let x = read_idx(images)?.to_images()?;
    let y = read_idx(labels)?.to_labels()?;
    if x.shape()[0] != y.len() {
        return Err(FormatError::CountMismatch {
            images: x.shape()[0],
            labels: y.len(),
        }
        .into());
    }
    Dataset::new(x, y, 10)
}
