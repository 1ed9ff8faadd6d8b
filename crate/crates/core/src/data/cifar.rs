//! CIFAR binary batches: fixed-size records of label byte(s) followed by
//! 3072 pixel bytes (red, green, blue 32×32 planes).

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

pub const CIFAR_IMAGE_BYTES: usize = 3 * 32 * 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarFormat {
    /// 1 label byte per record.
    Cifar10,
    /// 2 label bytes per record: coarse then fine.
    Cifar100,
}

impl CifarFormat {
    pub fn label_bytes(self) -> usize {
        match self {
            CifarFormat::Cifar10 => 1,
            CifarFormat::Cifar100 => 2,
        }
    }

    pub fn record_bytes(self) -> usize {
        self.label_bytes() + CIFAR_IMAGE_BYTES
    }
}

/// Which label a dataset is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarLabel {
    Cifar10,
    Cifar100Coarse,
    Cifar100Fine,
}

impl CifarLabel {
    pub fn format(self) -> CifarFormat {
        match self {
            CifarLabel::Cifar10 => CifarFormat::Cifar10,
            _ => CifarFormat::Cifar100,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            CifarLabel::Cifar10 => 10,
            CifarLabel::Cifar100Coarse => 20,
            CifarLabel::Cifar100Fine => 100,
        }
    }

    fn byte(self) -> usize {
        match self {
            CifarLabel::Cifar10 | CifarLabel::Cifar100Coarse => 0,
            CifarLabel::Cifar100Fine => 1,
        }
    }
}

/// Raw records, unscaled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CifarRecords {
    pub format: CifarFormat,
    /// `label_bytes` entries per record.
    pub labels: Vec<u8>,
    /// 3072 bytes per record.
    pub pixels: Vec<u8>,
}

impl CifarRecords {
    pub fn parse(bytes: &[u8], format: CifarFormat) -> Result<Self, FormatError> {
        let record = format.record_bytes();
        if bytes.len() % record != 0 {
            return Err(FormatError::RecordSize {
                len: bytes.len() as u64,
                record: record as u64,
                offset: (bytes.len() / record * record) as u64,
            });
        }
        let lb = format.label_bytes();
        let n = bytes.len() / record;
        let mut labels = Vec::with_capacity(n * lb);
        let mut pixels = Vec::with_capacity(n * CIFAR_IMAGE_BYTES);
        for r in bytes.chunks_exact(record) {
            labels.extend_from_slice(&r[..lb]);
            pixels.extend_from_slice(&r[lb..]);
        }
        Ok(CifarRecords {
            format,
            labels,
            pixels,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len() / CIFAR_IMAGE_BYTES
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let lb = self.format.label_bytes();
        let mut out = Vec::with_capacity(self.len() * self.format.record_bytes());
        for (l, p) in self
            .labels
            .chunks_exact(lb)
            .zip(self.pixels.chunks_exact(CIFAR_IMAGE_BYTES))
        {
            out.extend_from_slice(l);
            out.extend_from_slice(p);
        }
        out
    }

    /// Images as N×3×32×32 scaled to [0, 1], labelled by `label`.
    pub fn to_dataset(&self, label: CifarLabel) -> Result<Dataset> {
        if label.format() != self.format {
            return Err(Error::invalid("cifar", "label choice does not match record format"));
        }
        let lb = self.format.label_bytes();
        let labels = self
            .labels
            .chunks_exact(lb)
            .map(|c| c[label.byte()] as usize)
            .collect();
        let x = Tensor::from_parts(
            vec![self.len(), 3, 32, 32],
            self.pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
        );
        Dataset::new(x, labels, label.num_classes())
    }
}

pub fn load_cifar_binary(path: impl AsRef<Path>, label: CifarLabel) -> Result<Dataset> {
    load_cifar_files(&[path], label)
}

/// Concatenates several batch files (e.g. `data_batch_1.bin` … `data_batch_5.bin`).
pub fn load_cifar_files<P: AsRef<Path>>(paths: &[P], label: CifarLabel) -> Result<Dataset> {
    let format = label.format();
    let mut all = CifarRecords {
        format,
        labels: Vec::new(),
        pixels: Vec::new(),
    };
    for p in paths {
        let p = p.as_ref();
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        let r = CifarRecords::parse(&bytes, format)?;
        all.labels.extend(r.labels);
        all.pixels.extend(r.pixels);
    }
    all.to_dataset(label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_records(format: CifarFormat) -> Vec<u8> {
        let mut b = Vec::new();
        for r in 0..2u8 {
            b.extend((0..format.label_bytes() as u8).map(|k| 3 + r + 10 * k));
            b.extend((0..CIFAR_IMAGE_BYTES).map(|i| (i % 251) as u8 ^ r));
        }
        b
    }

    #[test]
    fn cifar10_fixture() {
        let b = two_records(CifarFormat::Cifar10);
        let rec = CifarRecords::parse(&b, CifarFormat::Cifar10).unwrap();
        let d = rec.to_dataset(CifarLabel::Cifar10).unwrap();
        assert_eq!(d.inputs.shape(), &[2, 3, 32, 32]);
        assert_eq!(d.labels, vec![3, 4]);
        // first green pixel of record 1
        assert_eq!(d.inputs.get(&[1, 1, 0, 0]), Some(f64::from((1024 % 251) as u8 ^ 1) / 255.0));
        assert_eq!(rec.to_bytes(), b);
    }

    #[test]
    fn cifar100_fine_reads_second_byte() {
        let b = two_records(CifarFormat::Cifar100);
        let rec = CifarRecords::parse(&b, CifarFormat::Cifar100).unwrap();
        assert_eq!(rec.to_dataset(CifarLabel::Cifar100Coarse).unwrap().labels, vec![3, 4]);
        assert_eq!(rec.to_dataset(CifarLabel::Cifar100Fine).unwrap().labels, vec![13, 14]);
    }

    #[test]
    fn partial_record_reports_offset() {
        let mut b = two_records(CifarFormat::Cifar10);
        b.truncate(b.len() - 5);
        let err = CifarRecords::parse(&b, CifarFormat::Cifar10).unwrap_err();
        assert_eq!(
            err,
            FormatError::RecordSize {
                len: 2 * 3073 - 5,
                record: 3073,
                offset: 3073
            }
        );
    }
}
