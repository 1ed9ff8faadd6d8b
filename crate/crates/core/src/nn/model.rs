use rand::Rng;

use super::arch::{Architecture, Head, LayerKind};
use super::init::Init;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A feedforward ReLU network: an [`Architecture`] plus its parameters.
///
/// Parameters are stored as a flat list `[W¹, b¹, W², b², …]` in layer order,
/// output layer last. Dense weights are `n_ℓ × n_{ℓ-1}` (row `j` holds the
/// incoming weights of unit `j`); conv kernels are `C_out × C_in × 3 × 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    arch: Architecture,
    params: Vec<Tensor>,
}

/// Everything a forward pass exposes: the parameter leaves it was run with,
/// per-hidden-layer preactivations `g` and activations `h = relu(g)`, the
/// logits and the softmax probabilities.
#[derive(Debug)]
pub struct ForwardTrace {
    pub params: Vec<Var>,
    pub input: Var,
    pub preactivations: Vec<Var>,
    pub activations: Vec<Var>,
    pub logits: Var,
    pub probabilities: Tensor,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(arch: Architecture, init: Init, rng: &mut R) -> Result<Self> {
        let layouts = arch.param_layouts()?;
        let mut params = Vec::with_capacity(layouts.len() * 2);
        for l in layouts {
            params.push(init.sample(&l.weight, l.fan_in, l.fan_out, rng));
            params.push(Tensor::zeros(&l.bias));
        }
        Ok(Model { arch, params })
    }

    /// Wraps existing parameters, checking their shapes and finiteness.
    pub fn from_params(arch: Architecture, params: Vec<Tensor>) -> Result<Self> {
        let layouts = arch.param_layouts()?;
        if params.len() != layouts.len() * 2 {
            return Err(Error::Architecture(format!(
                "expected {} parameter tensors, got {}",
                layouts.len() * 2,
                params.len()
            )));
        }
        for (l, pair) in layouts.iter().zip(params.chunks(2)) {
            if pair[0].shape() != l.weight.as_slice() || pair[1].shape() != l.bias.as_slice() {
                return Err(Error::Shape {
                    op: "from_params",
                    left: l.weight.clone(),
                    right: pair[0].shape().to_vec(),
                });
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite { op: "from_params" });
        }
        Ok(Model { arch, params })
    }

    pub fn build_mlp<R: Rng + ?Sized>(
        depth: usize,
        width: usize,
        input_dim: usize,
        num_classes: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        Model::new(Architecture::mlp(depth, width, input_dim, num_classes)?, init, rng)
    }

    pub fn build_convnet<R: Rng + ?Sized>(
        depth: usize,
        filters: usize,
        input_shape: [usize; 3],
        num_classes: usize,
        head: Head,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let arch = Architecture::convnet(depth, filters, input_shape, num_classes, head)?;
        Model::new(arch, init, rng)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Indices into [`Model::params`] of the weight and bias of hidden layer
    /// `hidden` (0-based).
    pub fn hidden_param_indices(&self, hidden: usize) -> Option<(usize, usize)> {
        (hidden < self.arch.depth()).then_some((2 * hidden, 2 * hidden + 1))
    }

    /// Runs `batch` (shape `N × input_shape`) through the network, recording
    /// every operation on `tape`.
    pub fn forward(&self, tape: &mut Tape, batch: &Tensor) -> Result<ForwardTrace> {
        let params = self
            .params
            .iter()
            .map(|p| tape.leaf(p.clone()))
            .collect::<Result<Vec<_>>>()?;
        self.forward_with(tape, params, batch)
    }

    /// Like [`Model::forward`], but reads parameters from existing tape
    /// nodes (in [`Model::params`] order, same shapes) instead of the stored
    /// tensors. Useful for differentiating with respect to leaves the caller
    /// owns, as a gradient check does.
    pub fn forward_with(&self, tape: &mut Tape, params: Vec<Var>, batch: &Tensor) -> Result<ForwardTrace> {
        if params.len() != self.params.len()
            || params
                .iter()
                .zip(&self.params)
                .any(|(&v, p)| tape.shape(v) != p.shape())
        {
            return Err(Error::invalid(
                "forward_with",
                "parameter nodes do not match the model's parameter shapes",
            ));
        }
        let expected = &self.arch.input_shape;
        if batch.rank() != expected.len() + 1 || &batch.shape()[1..] != expected.as_slice() {
            return Err(Error::Shape {
                op: "forward",
                left: batch.shape().to_vec(),
                right: expected.clone(),
            });
        }
        let n = batch.shape()[0];
        let input = tape.leaf(batch.clone())?;

        let mut h = input;
        let mut next_param = 0;
        let mut preactivations = Vec::new();
        let mut activations = Vec::new();
        let mut logits = None;
        for spec in &self.arch.layers {
            match spec.kind {
                LayerKind::Dense | LayerKind::Output => {
                    let (w, b) = (params[next_param], params[next_param + 1]);
                    next_param += 2;
                    let wt = tape.transpose(w)?;
                    let z = tape.matmul(h, wt)?;
                    let g = tape.add_row_bias(z, b)?;
                    if spec.kind == LayerKind::Output {
                        logits = Some(g);
                    } else {
                        h = tape.relu(g)?;
                        preactivations.push(g);
                        activations.push(h);
                    }
                }
                LayerKind::Conv => {
                    let (w, b) = (params[next_param], params[next_param + 1]);
                    next_param += 2;
                    let g = tape.conv2d_same(h, w, b)?;
                    h = tape.relu(g)?;
                    preactivations.push(g);
                    activations.push(h);
                }
                LayerKind::Flatten => {
                    let features = tape.value(h).len() / n.max(1);
                    h = tape.reshape(h, vec![n, features])?;
                }
                LayerKind::GlobalMaxAvgPool => {
                    h = tape.global_max_avg_pool(h)?;
                }
            }
        }
        let logits = logits.expect("validated architecture ends in an output layer");
        let probabilities = softmax_rows(tape.value(logits));
        Ok(ForwardTrace {
            params,
            input,
            preactivations,
            activations,
            logits,
            probabilities,
        })
    }

    /// Class predictions (argmax of the logits) for a batch.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let trace = self.forward(&mut tape, batch)?;
        Ok(argmax_rows(tape.value(trace.logits)))
    }
}

/// Row-wise softmax of an N×K matrix, computed with max-subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let k = logits.shape().last().copied().unwrap_or(1).max(1);
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    Tensor::from_parts(logits.shape().to_vec(), out)
}

/// Index of the first maximal entry of every row.
pub fn argmax_rows(m: &Tensor) -> Vec<usize> {
    let k = m.shape().last().copied().unwrap_or(1).max(1);
    m.data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Mean cross-entropy of the softmax of `logits` against class `labels`.
pub fn softmax_cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    tape.softmax_cross_entropy(logits, labels)
}
