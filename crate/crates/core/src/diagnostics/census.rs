use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::Tensor;

/// Classification of a unit over a dataset, or of a point at one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    /// Never active: every output is exactly zero.
    Dead,
    /// Always active: every output is strictly positive.
    Linear,
    Nonlinear,
}

pub type UnitState = State;
pub type PointState = State;

impl State {
    fn from_flags(any_active: bool, any_inactive: bool) -> State {
        match (any_active, any_inactive) {
            (false, _) => State::Dead,
            (true, false) => State::Linear,
            (true, true) => State::Nonlinear,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            State::Dead => "dead",
            State::Linear => "linear",
            State::Nonlinear => "nonlinear",
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub width: usize,
    pub dead_units: usize,
    pub linear_units: usize,
    pub nonlinear_units: usize,
    pub dead_points: usize,
    pub linear_points: usize,
    pub nonlinear_points: usize,
    /// Every unit of the layer is dead.
    pub dead: bool,
    /// Every unit of the layer is linear.
    pub linear: bool,
}

/// Unit and point states for every hidden layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Census {
    /// `units[layer][unit]`
    pub units: Vec<Vec<UnitState>>,
    /// `points[layer][sample]`
    pub points: Vec<Vec<PointState>>,
    pub summary: Vec<LayerSummary>,
}

/// Running any-active / any-inactive flags per unit plus per-sample point
/// states, accumulated batch by batch. Accumulators over disjoint parts of a
/// dataset combine with [`CensusAccumulator::merge`].
#[derive(Clone, Debug, Default)]
pub struct CensusAccumulator {
    any_active: Vec<Vec<bool>>,
    any_inactive: Vec<Vec<bool>>,
    points: Vec<Vec<PointState>>,
}

impl CensusAccumulator {
    pub fn new(model: &Model) -> Self {
        let widths = model.architecture().hidden_widths();
        CensusAccumulator {
            any_active: widths.iter().map(|&n| vec![false; n]).collect(),
            any_inactive: widths.iter().map(|&n| vec![false; n]).collect(),
            points: vec![Vec::new(); widths.len()],
        }
    }

    /// Runs `batch` through `model` and folds its activations into the flags.
    pub fn observe(&mut self, model: &Model, batch: &Tensor) -> Result<()> {
        let mut tape = Tape::new();
        let trace = model.forward(&mut tape, batch)?;
        for (layer, &h) in trace.activations.iter().enumerate() {
            self.observe_activations(layer, tape.value(h));
        }
        Ok(())
    }

    /// `h` is N×n (dense) or N×C×H×W (conv, one unit per channel).
    pub(crate) fn observe_activations(&mut self, layer: usize, h: &Tensor) {
        let n = h.shape()[0];
        let units = h.shape()[1];
        let per_unit = if n == 0 { 0 } else { h.len() / (n * units) };
        let data = h.data();
        for i in 0..n {
            let (mut all_active, mut all_inactive) = (true, true);
            for j in 0..units {
                let base = (i * units + j) * per_unit;
                for &v in &data[base..base + per_unit] {
                    if v > 0.0 {
                        self.any_active[layer][j] = true;
                        all_inactive = false;
                    } else {
                        self.any_inactive[layer][j] = true;
                        all_active = false;
                    }
                }
            }
            self.points[layer].push(if all_inactive {
                State::Dead
            } else if all_active {
                State::Linear
            } else {
                State::Nonlinear
            });
        }
    }

    /// Folds in an accumulator that observed the samples following this one's.
    pub fn merge(&mut self, other: CensusAccumulator) {
        for (a, b) in self.any_active.iter_mut().zip(other.any_active) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x |= y);
        }
        for (a, b) in self.any_inactive.iter_mut().zip(other.any_inactive) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x |= y);
        }
        for (a, b) in self.points.iter_mut().zip(other.points) {
            a.extend(b);
        }
    }

    pub fn finish(self) -> Result<Census> {
        if self.points.first().map_or(true, Vec::is_empty) {
            return Err(Error::invalid("census", "dataset is empty"));
        }
        let units: Vec<Vec<State>> = self
            .any_active
            .iter()
            .zip(&self.any_inactive)
            .map(|(a, i)| a.iter().zip(i).map(|(&a, &i)| State::from_flags(a, i)).collect())
            .collect();
        let count = |v: &[State], s: State| v.iter().filter(|&&x| x == s).count();
        let summary = units
            .iter()
            .zip(&self.points)
            .enumerate()
            .map(|(layer, (u, p))| LayerSummary {
                layer,
                width: u.len(),
                dead_units: count(u, State::Dead),
                linear_units: count(u, State::Linear),
                nonlinear_units: count(u, State::Nonlinear),
                dead_points: count(p, State::Dead),
                linear_points: count(p, State::Linear),
                nonlinear_points: count(p, State::Nonlinear),
                dead: u.iter().all(|&s| s == State::Dead),
                linear: u.iter().all(|&s| s == State::Linear),
            })
            .collect();
        Ok(Census {
            units,
            points: self.points,
            summary,
        })
    }
}

/// Classifies every unit and point of `model` over `inputs`, streaming the
/// dataset in chunks of `batch_size` samples.
pub fn census(model: &Model, inputs: &Tensor, batch_size: usize) -> Result<Census> {
    let n = inputs.shape().first().copied().unwrap_or(0);
    if n == 0 {
        return Err(Error::invalid("census", "dataset is empty"));
    }
    let batch_size = batch_size.max(1);
    let mut acc = CensusAccumulator::new(model);
    let rows: Vec<usize> = (0..n).collect();
    for chunk in rows.chunks(batch_size) {
        acc.observe(model, &inputs.select_rows(chunk)?)?;
    }
    acc.finish()
}

impl Census {
    pub fn dead_units(&self) -> usize {
        self.summary.iter().map(|s| s.dead_units).sum()
    }

    pub fn linear_units(&self) -> usize {
        self.summary.iter().map(|s| s.linear_units).sum()
    }

    pub fn nonlinear_units(&self) -> usize {
        self.summary.iter().map(|s| s.nonlinear_units).sum()
    }

    pub fn dead_layers(&self) -> usize {
        self.summary.iter().filter(|s| s.dead).count()
    }

    pub fn linear_layers(&self) -> usize {
        self.summary.iter().filter(|s| s.linear).count()
    }

    /// Writes one row per unit, one per (layer, sample) and two summary rows
    /// per layer. Columns: `record,layer,index,state,dead,linear,nonlinear`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["record", "layer", "index", "state", "dead", "linear", "nonlinear"])?;
        for (layer, units) in self.units.iter().enumerate() {
            for (j, s) in units.iter().enumerate() {
                w.write_record(["unit", &layer.to_string(), &j.to_string(), s.as_str(), "", "", ""])?;
            }
        }
        for (layer, points) in self.points.iter().enumerate() {
            for (i, s) in points.iter().enumerate() {
                w.write_record(["point", &layer.to_string(), &i.to_string(), s.as_str(), "", "", ""])?;
            }
        }
        for s in &self.summary {
            let layer_state = if s.dead {
                "dead"
            } else if s.linear {
                "linear"
            } else {
                "nonlinear"
            };
            w.write_record([
                "summary_units",
                &s.layer.to_string(),
                "",
                layer_state,
                &s.dead_units.to_string(),
                &s.linear_units.to_string(),
                &s.nonlinear_units.to_string(),
            ])?;
            w.write_record([
                "summary_points",
                &s.layer.to_string(),
                "",
                "",
                &s.dead_points.to_string(),
                &s.linear_points.to_string(),
                &s.nonlinear_points.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
