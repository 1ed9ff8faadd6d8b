use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Architecture, Head, Init};
use crate::penalty::PenaltyConfig;

/// Network family; input shape and class count come from the dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchSpec {
    Mlp {
        depth: usize,
        width: usize,
    },
    Conv {
        depth: usize,
        filters: usize,
        head: Head,
    },
}

impl ArchSpec {
    pub fn depth(&self) -> usize {
        match *self {
            ArchSpec::Mlp { depth, .. } | ArchSpec::Conv { depth, .. } => depth,
        }
    }

    /// Units per dense layer or filters per conv layer.
    pub fn width(&self) -> usize {
        match *self {
            ArchSpec::Mlp { width, .. } => width,
            ArchSpec::Conv { filters, .. } => filters,
        }
    }

    /// Same family with a different depth and width.
    pub fn resized(&self, depth: usize, width: usize) -> ArchSpec {
        match *self {
            ArchSpec::Mlp { .. } => ArchSpec::Mlp { depth, width },
            ArchSpec::Conv { head, .. } => ArchSpec::Conv {
                depth,
                filters: width,
                head,
            },
        }
    }

    pub fn build(&self, sample_shape: &[usize], num_classes: usize) -> Result<Architecture> {
        match *self {
            ArchSpec::Mlp { depth, width } => {
                let input_dim = sample_shape.iter().product();
                Architecture::mlp(depth, width, input_dim, num_classes)
            }
            ArchSpec::Conv {
                depth,
                filters,
                head,
            } => {
                let shape: [usize; 3] = sample_shape.try_into().map_err(|_| {
                    Error::Architecture(format!(
                        "conv networks need C×H×W samples, got {sample_shape:?}"
                    ))
                })?;
                Architecture::convnet(depth, filters, shape, num_classes, head)
            }
        }
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: ArchSpec,
    #[serde(default)]
    pub init: Init,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `None` trains on cross-entropy alone.
    #[serde(default)]
    pub penalty: Option<PenaltyConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Accuracies are measured every `eval_every` epochs and after the last.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Final train accuracy at or above this marks the run as successful.
    #[serde(default = "default_success_threshold")]
    pub success_threshold: f64,
}

fn default_eval_every() -> usize {
    1
}

fn default_success_threshold() -> f64 {
    0.95
}

impl TrainConfig {
    /// The two-moons protocol: Adam with step 0.01, 5000 epochs of one
    /// 85-sample batch, Glorot uniform initialization and λ = 1e-4 with the
    /// 1-norm.
    pub fn moons(depth: usize, width: usize) -> Self {
        TrainConfig {
            arch: ArchSpec::Mlp { depth, width },
            init: Init::GlorotUniform,
            epochs: 5000,
            batch_size: 85,
            learning_rate: 0.01,
            penalty: Some(PenaltyConfig::default()),
            seed: 0,
            eval_every: 100,
            success_threshold: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.success_threshold) {
            return Err(Error::Config(format!(
                "success_threshold must lie in [0, 1], got {}",
                self.success_threshold
            )));
        }
        if self.arch.depth() == 0 || self.arch.width() == 0 {
            return Err(Error::Config("depth and width must be at least 1".into()));
        }
        if let Some(p) = &self.penalty {
            p.validate()?;
        }
        Ok(())
    }

    /// λ, or 0 for cross-entropy-only training.
    pub fn lambda(&self) -> f64 {
        self.penalty.map_or(0.0, |p| p.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = TrainConfig::moons(5, 3);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<TrainConfig>(&text).unwrap(), c);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let c: TrainConfig = toml::from_str(
            r#"
            epochs = 3
            batch_size = 8
            learning_rate = 0.1
            [arch]
            kind = "conv"
            depth = 2
            filters = 4
            head = "global_max_avg_pool"
            "#,
        )
        .unwrap();
        assert_eq!(c.penalty, None);
        assert_eq!(c.success_threshold, 0.95);
        assert!(c.validate().is_ok());
        assert!(c.arch.build(&[2], 2).is_err());
        assert_eq!(c.arch.build(&[3, 4, 4], 10).unwrap().depth(), 2);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = TrainConfig::moons(5, 3);
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::moons(5, 3);
        c.penalty.as_mut().unwrap().lambda = -1.0;
        assert!(c.validate().is_err());
        assert!(toml::from_str::<TrainConfig>("epochs = 1\nbogus = 2").is_err());
    }
}
