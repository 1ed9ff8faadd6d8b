//! Datasets: the two-moons generator, IDX (MNIST) and CIFAR binary readers,
//! and seeded subsetting.

mod cifar;
mod idx;
mod moons;
mod split;

pub use cifar::{load_cifar_binary, load_cifar_files, CifarFormat, CifarLabel, CifarRecords, CIFAR_IMAGE_BYTES};
pub use idx::{load_idx, load_mnist, parse_idx, read_idx, IdxArray, IdxData};
pub use moons::make_moons;
pub use split::{apportion, subset_and_split};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Samples with class labels and a train/validation partition of their indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Dataset {
    /// All samples assigned to the training split.
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let n = labels.len();
        Dataset::with_split(inputs, labels, num_classes, (0..n).collect(), Vec::new())
    }

    pub fn with_split(
        inputs: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        train: Vec<usize>,
        validation: Vec<usize>,
    ) -> Result<Self> {
        let n = inputs.shape().first().copied().unwrap_or(0);
        if inputs.rank() < 2 || n != labels.len() {
            return Err(Error::invalid(
                "dataset",
                format!(
                    "{} labels for inputs of shape {:?}",
                    labels.len(),
                    inputs.shape()
                ),
            ));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                num_classes,
            });
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&validation) {
            if i >= n || seen[i] {
                return Err(Error::invalid(
                    "dataset",
                    format!("split index {i} is out of range or repeated"),
                ));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("dataset", "split does not cover every sample"));
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
            train,
            validation,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample input shape.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn select(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let x = self.inputs.select_rows(indices)?;
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((x, y))
    }

    pub fn train_set(&self) -> Result<(Tensor, Vec<usize>)> {
        self.select(&self.train)
    }

    pub fn validation_set(&self) -> Result<(Tensor, Vec<usize>)> {
        self.select(&self.validation)
    }
}
