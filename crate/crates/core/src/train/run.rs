use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::TrainConfig;
use crate::autodiff::Tape;
use crate::data::Dataset;
use crate::diagnostics::census;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::penalty::jumpstart_loss;
use crate::tensor::Tensor;

/// Losses and accuracies of one evaluated epoch. Losses are sample-weighted
/// means over the epoch's minibatches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub base_loss: f64,
    /// Unscaled aggregated deficits, 0 without a penalty.
    pub penalty: f64,
    pub total_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// A loss, gradient or parameter became non-finite during `epoch`.
    Diverged { epoch: usize },
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunStatus::Completed => f.write_str("completed"),
            RunStatus::Diverged { epoch } => write!(f, "diverged@{epoch}"),
        }
    }
}

/// Census totals of the final model on the training split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusSummary {
    pub dead_units: usize,
    pub linear_units: usize,
    pub nonlinear_units: usize,
    pub dead_layers: usize,
    pub linear_layers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub curves: Vec<EpochRecord>,
    pub final_train_acc: f64,
    pub final_val_acc: Option<f64>,
    pub best_val_acc: Option<f64>,
    pub census: Option<CensusSummary>,
    pub status: RunStatus,
    pub wall_seconds: f64,
    /// `final_train_acc >= config.success_threshold`
    pub success: bool,
}

/// Trains a fresh model and returns its record.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<RunRecord> {
    train_model(config, dataset).map(|(_, r)| r)
}

/// Trains a fresh model and returns it with its record.
///
/// A non-finite loss, gradient or parameter stops the run and the status names
/// the epoch. Accuracies of a model that no longer evaluates to finite logits
/// count as 0.
pub fn train_model(config: &TrainConfig, dataset: &Dataset) -> Result<(Model, RunRecord)> {
    config.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let start = Instant::now();
    let arch = config
        .arch
        .build(dataset.sample_shape(), dataset.num_classes)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::new(arch, config.init, &mut init_rng)?;
    let mut adam = AdamState::new(model.params());
    let (train_x, train_y) = dataset.train_set()?;
    let val = if dataset.validation.is_empty() {
        None
    } else {
        Some(dataset.validation_set()?)
    };

    let mut curves = Vec::new();
    let mut status = RunStatus::Completed;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_y.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut sums = [0.0; 3];
        let mut diverged = false;
        for batch in order.chunks(config.batch_size) {
            let x = train_x.select_rows(batch)?;
            let y: Vec<usize> = batch.iter().map(|&i| train_y[i]).collect();
            match step(&mut model, &mut adam, config, &x, &y) {
                Ok(losses) => {
                    for (s, l) in sums.iter_mut().zip(losses) {
                        *s += l * batch.len() as f64;
                    }
                }
                Err(Error::NonFinite { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if diverged {
            status = RunStatus::Diverged { epoch };
            break;
        }
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            let n = train_y.len() as f64;
            let record = EpochRecord {
                epoch,
                base_loss: sums[0] / n,
                penalty: sums[1] / n,
                total_loss: sums[2] / n,
                train_acc: lenient_accuracy(&model, &train_x, &train_y)?,
                val_acc: val
                    .as_ref()
                    .map(|(x, y)| lenient_accuracy(&model, x, y))
                    .transpose()?,
            };
            curves.push(record);
        }
    }

    let final_train_acc = lenient_accuracy(&model, &train_x, &train_y)?;
    let final_val_acc = val
        .as_ref()
        .map(|(x, y)| lenient_accuracy(&model, x, y))
        .transpose()?;
    let best_val_acc = curves
        .iter()
        .filter_map(|r| r.val_acc)
        .chain(final_val_acc)
        .reduce(f64::max);
    let census = census(&model, &train_x, config.batch_size.max(256))
        .ok()
        .map(|c| CensusSummary {
            dead_units: c.dead_units(),
            linear_units: c.linear_units(),
            nonlinear_units: c.nonlinear_units(),
            dead_layers: c.dead_layers(),
            linear_layers: c.linear_layers(),
        });
    let record = RunRecord {
        config: config.clone(),
        curves,
        final_train_acc,
        final_val_acc,
        best_val_acc,
        census,
        status,
        wall_seconds: start.elapsed().as_secs_f64(),
        success: final_train_acc >= config.success_threshold,
    };
    Ok((model, record))
}

/// One forward/backward/update; returns (base, penalty, total).
fn step(
    model: &mut Model,
    adam: &mut AdamState,
    config: &TrainConfig,
    x: &Tensor,
    y: &[usize],
) -> Result<[f64; 3]> {
    let mut tape = Tape::new();
    let trace = model.forward(&mut tape, x)?;
    let (root, losses) = match &config.penalty {
        None => {
            let base = tape.softmax_cross_entropy(trace.logits, y)?;
            let b = scalar(&tape, base);
            (base, [b, 0.0, b])
        }
        Some(p) => {
            let loss = jumpstart_loss(&mut tape, &trace, y, p)?;
            let vals = [
                scalar(&tape, loss.base),
                scalar(&tape, loss.penalty),
                scalar(&tape, loss.total),
            ];
            (loss.total, vals)
        }
    };
    let grads = tape.backward(root)?;
    let grads: Vec<Tensor> = trace.params.iter().map(|&v| grads.wrt(&tape, v)).collect();
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { op: "gradient" });
    }
    adam_step(model.params_mut(), &grads, adam, config.learning_rate)?;
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite { op: "adam_step" });
    }
    Ok(losses)
}

fn scalar(tape: &Tape, v: crate::autodiff::Var) -> f64 {
    tape.value(v).data()[0]
}

fn lenient_accuracy(model: &Model, x: &Tensor, y: &[usize]) -> Result<f64> {
    match accuracy(model, x, y) {
        Err(Error::NonFinite { .. }) => Ok(0.0),
        other => other,
    }
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy(model: &Model, x: &Tensor, y: &[usize]) -> Result<f64> {
    if y.is_empty() {
        return Ok(0.0);
    }
    let pred = model.predict(x)?;
    let hits = pred.iter().zip(y).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / y.len() as f64)
}
