use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::penalty::{jumpstart_loss, PenaltyConfig};
use crate::tensor::Tensor;

use super::census::{census, State};

/// Parameter gradients of a model whose hidden layer `layer` is dead on a
/// batch, once for the plain cross-entropy and once for the regularized loss.
#[derive(Clone, Debug)]
pub struct DeadLayerProbe {
    pub layer: usize,
    /// Gradients of the cross-entropy, in [`Model::params`] order.
    pub base: Vec<Tensor>,
    /// Gradients of cross-entropy plus `lambda * P`.
    pub jumpstart: Vec<Tensor>,
}

impl DeadLayerProbe {
    /// Parameters of hidden layers `0..=layer`.
    pub fn upstream_params(&self) -> std::ops::Range<usize> {
        0..2 * (self.layer + 1)
    }

    /// True when every base-loss gradient of layers up to the dead one is exactly 0.
    pub fn base_is_blocked(&self) -> bool {
        self.base[self.upstream_params()]
            .iter()
            .all(|g| g.data().iter().all(|&v| v == 0.0))
    }

    /// True when the regularized loss moves some parameter of layers up to the dead one.
    pub fn jumpstart_rescues(&self) -> bool {
        self.jumpstart[self.upstream_params()]
            .iter()
            .any(|g| g.data().iter().any(|&v| v != 0.0))
    }
}

/// Computes base and regularized gradients for a batch on which hidden layer
/// `layer` (0-based) is dead. Fails with a precondition error when the layer
/// has any unit that activates on the batch.
pub fn dead_layer_gradient_probe(
    model: &Model,
    inputs: &Tensor,
    labels: &[usize],
    layer: usize,
    penalty: &PenaltyConfig,
) -> Result<DeadLayerProbe> {
    let c = census(model, inputs, usize::MAX)?;
    let Some(units) = c.units.get(layer) else {
        return Err(Error::Precondition(format!(
            "model has {} hidden layers, asked for layer {layer}",
            c.units.len()
        )));
    };
    if units.iter().any(|&s| s != State::Dead) {
        return Err(Error::Precondition(format!(
            "hidden layer {layer} is not dead on the batch"
        )));
    }

    let gradients = |with_penalty: bool| -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, inputs)?;
        let root = if with_penalty {
            jumpstart_loss(&mut tape, &trace, labels, penalty)?.total
        } else {
            tape.softmax_cross_entropy(trace.logits, labels)?
        };
        let grads = tape.backward(root)?;
        Ok(trace.params.iter().map(|&p| grads.wrt(&tape, p)).collect())
    };
    Ok(DeadLayerProbe {
        layer,
        base: gradients(false)?,
        jumpstart: gradients(true)?,
    })
}
