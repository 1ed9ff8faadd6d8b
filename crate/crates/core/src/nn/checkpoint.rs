//! Portable model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes            | content                                        |
//! |------------------|------------------------------------------------|
//! | 8                | magic `JMPSTRT1`                               |
//! | 4 (u32)          | descriptor length `D`                          |
//! | D                | UTF-8 JSON [`Architecture`]                    |
//! | 4 (u32)          | parameter block count `B`                      |
//! | per block        | rank `r` (u32), `r` dims (u64), then `∏dims` f64 |
//!
//! Blocks appear in [`Model::params`] order. Trailing bytes are rejected.

use std::fs;
use std::path::Path;

use super::arch::Architecture;
use super::model::Model;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"JMPSTRT1";

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let descriptor =
        serde_json::to_vec(model.architecture()).expect("architecture serializes to JSON");
    let mut out = Vec::with_capacity(16 + descriptor.len() + model.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(&descriptor);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&(p.rank() as u32).to_le_bytes());
        for &d in p.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "truncated: needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let dlen = r.u32()? as usize;
    let arch: Architecture = serde_json::from_slice(r.take(dlen)?)
        .map_err(|e| Error::Checkpoint(format!("descriptor: {e}")))?;
    let blocks = r.u32()? as usize;
    let mut params = Vec::with_capacity(blocks.min(1 << 16));
    for _ in 0..blocks {
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(
                usize::try_from(r.u64()?).map_err(|_| Error::Checkpoint("dimension overflow".into()))?,
            );
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8).map(|_| n))
            .ok_or_else(|| Error::Checkpoint("dimension overflow".into()))?;
        let raw = r.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(Tensor::from_parts(shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Model::from_params(arch, params)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Head, Init};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [
            Model::build_mlp(3, 4, 2, 2, Init::GlorotUniform, &mut rng).unwrap(),
            Model::build_convnet(2, 3, [1, 5, 5], 4, Head::GlobalMaxAvgPool, Init::KaimingUniform, &mut rng)
                .unwrap(),
        ] {
            let back = from_bytes(&to_bytes(&m)).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn header_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Model::build_mlp(1, 1, 1, 2, Init::GlorotUniform, &mut rng).unwrap();
        let b = to_bytes(&m);
        assert_eq!(&b[..8], MAGIC);
        let dlen = u32::from_le_bytes(b[8..12].try_into().unwrap()) as usize;
        let json: serde_json::Value = serde_json::from_slice(&b[12..12 + dlen]).unwrap();
        assert_eq!(json["num_classes"], 2);
        let blocks = u32::from_le_bytes(b[12 + dlen..16 + dlen].try_into().unwrap());
        assert_eq!(blocks, 4);
        // 4 blocks: W1 1×1, b1 1, W2 2×1, b2 2
        let expected = 16 + dlen + (4 + 16 + 8) + (4 + 8 + 8) + (4 + 16 + 16) + (4 + 8 + 16);
        assert_eq!(b.len(), expected);
    }

    #[test]
    fn rejects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Model::build_mlp(2, 2, 2, 2, Init::GlorotUniform, &mut rng).unwrap();
        let b = to_bytes(&m);
        assert!(from_bytes(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut bad = b;
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
    }
}
