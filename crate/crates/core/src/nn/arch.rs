use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Fully connected layer followed by ReLU.
    Dense,
    /// 3×3 same-padded convolution followed by ReLU.
    Conv,
    Flatten,
    /// Per-channel spatial max and mean, concatenated.
    GlobalMaxAvgPool,
    /// Final dense layer producing logits.
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Units for dense layers, filters for conv layers, classes for the
    /// output layer. Ignored for flatten and pooling.
    pub width: usize,
}

/// Classifier head of a convolutional network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Flatten,
    GlobalMaxAvgPool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
    /// Per-sample input shape: `[features]` or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
}

/// Shapes and fans of one parametric layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct ParamLayout {
    pub layer: usize,
    pub weight: Vec<usize>,
    pub bias: Vec<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Architecture {
    /// `depth` dense ReLU layers of `width` units and a dense output layer.
    pub fn mlp(depth: usize, width: usize, input_dim: usize, num_classes: usize) -> Result<Self> {
        let mut layers = vec![
            LayerSpec {
                kind: LayerKind::Dense,
                width
            };
            depth
        ];
        layers.push(LayerSpec {
            kind: LayerKind::Output,
            width: num_classes,
        });
        let arch = Architecture {
            layers,
            input_shape: vec![input_dim],
            num_classes,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// `depth` conv ReLU layers of `filters` channels, the given head and a
    /// dense output layer.
    pub fn convnet(
        depth: usize,
        filters: usize,
        input_shape: [usize; 3],
        num_classes: usize,
        head: Head,
    ) -> Result<Self> {
        let mut layers = vec![
            LayerSpec {
                kind: LayerKind::Conv,
                width: filters
            };
            depth
        ];
        layers.push(LayerSpec {
            kind: match head {
                Head::Flatten => LayerKind::Flatten,
                Head::GlobalMaxAvgPool => LayerKind::GlobalMaxAvgPool,
            },
            width: 0,
        });
        layers.push(LayerSpec {
            kind: LayerKind::Output,
            width: num_classes,
        });
        let arch = Architecture {
            layers,
            input_shape: input_shape.to_vec(),
            num_classes,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        self.walk().map(|_| ())
    }

    /// Number of hidden (ReLU) layers.
    pub fn depth(&self) -> usize {
        self.layers.iter().filter(|l| l.is_hidden()).count()
    }

    /// Width `n_ℓ` of every hidden layer, in order.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|l| l.is_hidden())
            .map(|l| l.width)
            .collect()
    }

    pub(crate) fn param_layouts(&self) -> Result<Vec<ParamLayout>> {
        self.walk()
    }

    /// Checks the layer sequence and derives parameter shapes.
    fn walk(&self) -> Result<Vec<ParamLayout>> {
        let bad = |msg: String| Err(Error::Architecture(msg));
        if self.num_classes == 0 {
            return bad("num_classes must be at least 1".into());
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return bad(format!("invalid input shape {:?}", self.input_shape));
        }
        if !matches!(self.input_shape.len(), 1 | 3) {
            return bad(format!(
                "input shape must be [features] or [channels, height, width], got {:?}",
                self.input_shape
            ));
        }
        let outputs = self
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::Output)
            .count();
        if outputs != 1 || self.layers.last().map(|l| l.kind) != Some(LayerKind::Output) {
            return bad("exactly one output layer is required and it must be last".into());
        }
        if self.depth() == 0 {
            return bad("at least one hidden layer is required".into());
        }

        let mut feature = self.input_shape.clone();
        let mut layouts = Vec::new();
        for (i, spec) in self.layers.iter().enumerate() {
            match spec.kind {
                LayerKind::Dense | LayerKind::Output => {
                    if feature.len() != 1 {
                        return bad(format!("layer {i}: dense layer needs flat features, got {feature:?}"));
                    }
                    if spec.width == 0 {
                        return bad(format!("layer {i}: width must be at least 1"));
                    }
                    if spec.kind == LayerKind::Output && spec.width != self.num_classes {
                        return bad(format!(
                            "output width {} does not match {} classes",
                            spec.width, self.num_classes
                        ));
                    }
                    layouts.push(ParamLayout {
                        layer: i,
                        weight: vec![spec.width, feature[0]],
                        bias: vec![spec.width],
                        fan_in: feature[0],
                        fan_out: spec.width,
                    });
                    feature = vec![spec.width];
                }
                LayerKind::Conv => {
                    if feature.len() != 3 {
                        return bad(format!("layer {i}: conv layer needs C×H×W features, got {feature:?}"));
                    }
                    if spec.width == 0 {
                        return bad(format!("layer {i}: filter count must be at least 1"));
                    }
                    layouts.push(ParamLayout {
                        layer: i,
                        weight: vec![spec.width, feature[0], 3, 3],
                        bias: vec![spec.width],
                        fan_in: feature[0] * 9,
                        fan_out: spec.width * 9,
                    });
                    feature[0] = spec.width;
                }
                LayerKind::Flatten => {
                    if feature.len() != 3 {
                        return bad(format!("layer {i}: flatten needs C×H×W features"));
                    }
                    feature = vec![feature.iter().product()];
                }
                LayerKind::GlobalMaxAvgPool => {
                    if feature.len() != 3 {
                        return bad(format!("layer {i}: pooling needs C×H×W features"));
                    }
                    feature = vec![2 * feature[0]];
                }
            }
        }
        Ok(layouts)
    }
}

impl LayerSpec {
    /// Dense and conv layers carry a ReLU and fall under the margin constraints.
    pub fn is_hidden(&self) -> bool {
        matches!(self.kind, LayerKind::Dense | LayerKind::Conv)
    }
}
