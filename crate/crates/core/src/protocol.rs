//! Experiment descriptions: where the data comes from, how the network is
//! trained and, for sweeps, which grid to cover. These are what config files
//! and presets describe and what a run directory's manifest records.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{load_cifar_files, load_mnist, make_moons, subset_and_split, CifarLabel, Dataset};
use crate::error::{Error, Result};
use crate::nn::{Head, Init};
use crate::penalty::{Aggregation, PenaltyConfig};
use crate::train::{ArchSpec, SweepGrid, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Moons,
    Mnist,
    Cifar10,
    Cifar100Coarse,
    Cifar100Fine,
}

impl DataSource {
    fn cifar_label(self) -> Option<CifarLabel> {
        match self {
            DataSource::Cifar10 => Some(CifarLabel::Cifar10),
            DataSource::Cifar100Coarse => Some(CifarLabel::Cifar100Coarse),
            DataSource::Cifar100Fine => Some(CifarLabel::Cifar100Fine),
            _ => None,
        }
    }
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moons" => Ok(DataSource::Moons),
            "mnist" => Ok(DataSource::Mnist),
            "cifar10" => Ok(DataSource::Cifar10),
            "cifar100-coarse" => Ok(DataSource::Cifar100Coarse),
            "cifar100-fine" => Ok(DataSource::Cifar100Fine),
            other => Err(Error::Config(format!(
                "unknown data source {other:?} (expected moons, mnist, cifar10, cifar100-coarse or cifar100-fine)"
            ))),
        }
    }
}

/// Where samples come from and how they are split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub source: DataSource,
    /// Points generated for MOONS.
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// Gaussian noise for MOONS.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// MNIST image and label IDX files.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// CIFAR binary batch files, concatenated in order.
    #[serde(default)]
    pub files: Vec<PathBuf>,
    /// Subset sizes; when unset every sample is used for training.
    pub train_n: Option<usize>,
    pub val_n: Option<usize>,
    #[serde(default)]
    pub stratified: bool,
    /// Seeds the MOONS noise and the subset shuffle.
    #[serde(default)]
    pub seed: u64,
}

fn default_n_samples() -> usize {
    100
}

fn default_noise() -> f64 {
    0.1
}

impl DataSpec {
    pub fn moons() -> Self {
        DataSpec {
            source: DataSource::Moons,
            n_samples: 100,
            noise: 0.1,
            images: None,
            labels: None,
            files: Vec::new(),
            train_n: Some(85),
            val_n: Some(15),
            stratified: false,
            seed: 0,
        }
    }

    /// Checks everything that can be checked without touching the files.
    pub fn validate(&self) -> Result<()> {
        match self.source {
            DataSource::Moons => {
                if self.n_samples < 2 {
                    return Err(Error::Config("moons needs at least 2 samples".into()));
                }
                if !(self.noise >= 0.0 && self.noise.is_finite()) {
                    return Err(Error::Config(format!("noise must be nonnegative, got {}", self.noise)));
                }
                let wanted = self.train_n.unwrap_or(0) + self.val_n.unwrap_or(0);
                if wanted > self.n_samples {
                    return Err(Error::Config(format!(
                        "split of {wanted} samples exceeds the {} generated",
                        self.n_samples
                    )));
                }
            }
            DataSource::Mnist => {
                if self.images.is_none() || self.labels.is_none() {
                    return Err(Error::Config("mnist needs both images and labels paths".into()));
                }
            }
            _ => {
                if self.files.is_empty() {
                    return Err(Error::Config("cifar needs at least one batch file".into()));
                }
            }
        }
        if self.train_n == Some(0) {
            return Err(Error::Config("train_n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load(&self) -> Result<Dataset> {
        self.validate()?;
        let full = match self.source {
            DataSource::Moons => make_moons(self.n_samples, self.noise, self.seed)?,
            DataSource::Mnist => load_mnist(
                self.images.as_ref().expect("validated"),
                self.labels.as_ref().expect("validated"),
            )?,
            other => load_cifar_files(&self.files, other.cifar_label().expect("cifar source"))?,
        };
        if self.train_n.is_none() && self.val_n.is_none() {
            return Ok(full);
        }
        let train_n = self.train_n.unwrap_or(full.len() - self.val_n.unwrap_or(0).min(full.len()));
        subset_and_split(&full, train_n, self.val_n.unwrap_or(0), self.seed, self.stratified)
    }
}

/// Depths, widths, λ values (0 meaning no penalty) and seeds to sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Concurrent runs; all cores when unset.
    pub threads: Option<usize>,
}

impl SweepSpec {
    /// Penalties take margin and aggregation from `train.penalty`.
    pub fn grid(&self, train: &TrainConfig) -> Result<SweepGrid> {
        let template = train.penalty.unwrap_or_default();
        let penalties = self
            .lambdas
            .iter()
            .map(|&lambda| {
                if lambda == 0.0 {
                    Ok(None)
                } else {
                    PenaltyConfig::new(lambda, template.margin, template.aggregation).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let grid = SweepGrid {
            depths: self.depths.clone(),
            widths: self.widths.clone(),
            penalties,
            seeds: self.seeds.clone(),
        };
        grid.validate()?;
        Ok(grid)
    }
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub data: DataSpec,
    pub train: TrainConfig,
    pub sweep: Option<SweepSpec>,
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        if let Some(s) = &self.sweep {
            s.grid(&self.train)?;
        }
        Ok(())
    }
}

/// Built-in protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Two moons, 85/15 split, width 3 depth 5 MLP, Adam 0.01, 5000 epochs of
    /// batch 85, λ = 1e-4 with the 1-norm. Sweeps widths {2, 3, 5, 10} and
    /// depths {5, 10, 20, 40, 60}, baseline and jumpstart, one seed.
    Moons,
    /// A 5000/1000 stratified MNIST subset, conv networks of 2 filters with a
    /// flatten head, Adam 0.001, batch 1024, 20 epochs, λ = 1e-8 with the
    /// 1-norm. Sweeps depths {4, 16, 28}. Image and label paths must be given.
    MnistDesk,
    /// CIFAR-10 with a global max-avg pool head, Kaiming uniform init,
    /// Adam 0.001, batch 128, λ = 0.001 with the 2-norm. Sweeps depths
    /// {10, 20, 30} and widths {2, 8, 16, 32, 64, 96, 192}. Batch files must
    /// be given.
    Cifar10,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moons" => Ok(Preset::Moons),
            "mnist-desk" => Ok(Preset::MnistDesk),
            "cifar10" => Ok(Preset::Cifar10),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected moons, mnist-desk or cifar10)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Moons => "moons",
            Preset::MnistDesk => "mnist-desk",
            Preset::Cifar10 => "cifar10",
        })
    }
}

impl Preset {
    pub fn protocol(self) -> Protocol {
        match self {
            Preset::Moons => Protocol {
                data: DataSpec::moons(),
                train: TrainConfig::moons(5, 3),
                sweep: Some(SweepSpec {
                    depths: vec![5, 10, 20, 40, 60],
                    widths: vec![2, 3, 5, 10],
                    lambdas: vec![0.0, 1e-4],
                    seeds: vec![0],
                    threads: None,
                }),
            },
            Preset::MnistDesk => Protocol {
                data: DataSpec {
                    source: DataSource::Mnist,
                    train_n: Some(5000),
                    val_n: Some(1000),
                    stratified: true,
                    ..DataSpec::moons()
                },
                train: TrainConfig {
                    arch: ArchSpec::Conv {
                        depth: 16,
                        filters: 2,
                        head: Head::Flatten,
                    },
                    init: Init::GlorotUniform,
                    epochs: 20,
                    batch_size: 1024,
                    learning_rate: 0.001,
                    penalty: Some(PenaltyConfig {
                        lambda: 1e-8,
                        margin: 1.0,
                        aggregation: Aggregation::Norm1,
                    }),
                    seed: 0,
                    eval_every: 1,
                    success_threshold: 0.9,
                },
                sweep: Some(SweepSpec {
                    depths: vec![4, 16, 28],
                    widths: vec![2],
                    lambdas: vec![0.0, 1e-8],
                    seeds: vec![0, 1, 2],
                    threads: None,
                }),
            },
            Preset::Cifar10 => Protocol {
                data: DataSpec {
                    source: DataSource::Cifar10,
                    train_n: None,
                    val_n: None,
                    ..DataSpec::moons()
                },
                train: TrainConfig {
                    arch: ArchSpec::Conv {
                        depth: 10,
                        filters: 8,
                        head: Head::GlobalMaxAvgPool,
                    },
                    init: Init::KaimingUniform,
                    epochs: 400,
                    batch_size: 128,
                    learning_rate: 0.001,
                    penalty: Some(PenaltyConfig {
                        lambda: 0.001,
                        margin: 1.0,
                        aggregation: Aggregation::Norm2,
                    }),
                    seed: 0,
                    eval_every: 1,
                    success_threshold: 0.95,
                },
                sweep: Some(SweepSpec {
                    depths: vec![10, 20, 30],
                    widths: vec![2, 8, 16, 32, 64, 96, 192],
                    lambdas: vec![0.0, 0.001, 0.1],
                    seeds: vec![0],
                    threads: None,
                }),
            },
        }
    }
}

/// Overlays a TOML document on `base`: tables merge key by key, everything
/// else is replaced.
pub fn overlay(base: &Protocol, toml_text: &str) -> Result<Protocol> {
    let over: toml::Table =
        toml::from_str(toml_text).map_err(|e| Error::Config(format!("config file: {e}")))?;
    let toml::Value::Table(mut merged) =
        toml::Value::try_from(base).map_err(|e| Error::Config(e.to_string()))?
    else {
        unreachable!("a struct serializes to a table")
    };
    merge(&mut merged, over);
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("config file: {e}")))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_except_for_missing_paths() {
        assert!(Preset::Moons.protocol().validate().is_ok());
        assert!(Preset::MnistDesk.protocol().validate().is_err());
        let d = Preset::Moons.protocol().data.load().unwrap();
        assert_eq!((d.train.len(), d.validation.len()), (85, 15));
    }

    #[test]
    fn overlay_changes_only_named_fields() {
        let base = Preset::Moons.protocol();
        let p = overlay(
            &base,
            "[train]\nepochs = 7\n[train.penalty]\nlambda = 0.5\n[train.arch]\ndepth = 9\n",
        )
        .unwrap();
        assert_eq!(p.train.epochs, 7);
        assert_eq!(p.train.penalty.unwrap().lambda, 0.5);
        assert_eq!(p.train.penalty.unwrap().aggregation, Aggregation::Norm1);
        assert_eq!(p.train.arch, ArchSpec::Mlp { depth: 9, width: 3 });
        assert_eq!(p.data, base.data);
        assert!(overlay(&base, "[train]\nbogus = 1\n").is_err());
        assert!(overlay(&base, "not toml").is_err());
    }

    #[test]
    fn protocol_round_trips_through_toml() {
        for preset in [Preset::Moons, Preset::MnistDesk, Preset::Cifar10] {
            let p = preset.protocol();
            let text = toml::to_string(&p).unwrap();
            assert_eq!(toml::from_str::<Protocol>(&text).unwrap(), p);
        }
    }

    #[test]
    fn zero_lambda_is_the_baseline() {
        let p = Preset::Moons.protocol();
        let grid = p.sweep.unwrap().grid(&p.train).unwrap();
        assert_eq!(grid.penalties[0], None);
        assert_eq!(grid.penalties[1].unwrap().lambda, 1e-4);
    }
}
