//! Jumpstart regularization.
//!
//! For every hidden layer with preactivations `G` (batch × units) and a margin
//! `m > 0`, four families of hinge deficits measure how far the layer is from
//! satisfying its margin constraints on the batch:
//!
//! | deficit      | entry              | constraint it relaxes                |
//! |--------------|--------------------|--------------------------------------|
//! | `xi_plus`    | one per unit `j`   | `max_i G[i,j] ≥ m` (unit not dead)   |
//! | `xi_minus`   | one per unit `j`   | `min_i G[i,j] ≤ -m` (unit not linear)|
//! | `psi_plus`   | one per sample `i` | `max_j G[i,j] ≥ m` (point not dead)  |
//! | `psi_minus`  | one per sample `i` | `min_j G[i,j] ≤ -m` (point not linear)|
//!
//! Each deficit is `max(0, m - max)` or `max(0, m + min)`, so it is zero
//! exactly when its constraint holds. All deficits of all hidden layers are
//! concatenated and reduced by an [`Aggregation`] to the scalar penalty `P`,
//! and the training objective becomes `cross_entropy + lambda * P`.
//!
//! Convolutional layers treat every filter as one unit: the spatial maxima
//! feed the `+` deficits and the spatial minima feed the `-` deficits (see
//! [`conv_margin_reduce`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Extremum, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::ForwardTrace;

/// How the concatenated deficit vector `v` is reduced to a scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `Σv / len(v)`
    Mean,
    /// `Σv` (entries are nonnegative)
    #[default]
    Norm1,
    /// `sqrt(Σv²)`
    Norm2,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Norm1 => "norm1",
            Aggregation::Norm2 => "norm2",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "norm1" | "l1" => Ok(Aggregation::Norm1),
            "norm2" | "l2" => Ok(Aggregation::Norm2),
            other => Err(Error::Config(format!(
                "unknown aggregation {other:?} (expected mean, norm1 or norm2)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Loss coefficient; 0 leaves the base loss unchanged.
    pub lambda: f64,
    /// Positive margin; units and points must reach `+margin` and `-margin`.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
}

fn default_margin() -> f64 {
    1.0
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            lambda: 1e-4,
            margin: 1.0,
            aggregation: Aggregation::Norm1,
        }
    }
}

impl PenaltyConfig {
    pub fn new(lambda: f64, margin: f64, aggregation: Aggregation) -> Result<Self> {
        let c = PenaltyConfig {
            lambda,
            margin,
            aggregation,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be a finite nonnegative number, got {}",
                self.lambda
            )));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

/// The four deficit vectors of one hidden layer, as tape nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerDeficits {
    pub xi_plus: Var,
    pub xi_minus: Var,
    pub psi_plus: Var,
    pub psi_minus: Var,
}

impl LayerDeficits {
    fn parts(&self) -> [Var; 4] {
        [self.xi_plus, self.xi_minus, self.psi_plus, self.psi_minus]
    }
}

/// Deficits of every hidden layer, in layer order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeficitSet {
    pub layers: Vec<LayerDeficits>,
}

impl DeficitSet {
    /// All entries concatenated as `[ξ⁺¹, ξ⁻¹, ψ⁺¹, ψ⁻¹, ξ⁺², …]`.
    pub fn flatten(&self, tape: &Tape) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.parts())
            .flat_map(|v| tape.value(v).data().to_vec())
            .collect()
    }

    pub fn len(&self, tape: &Tape) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.parts())
            .map(|v| tape.value(v).len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// `max(0, margin - x)`: positive while `x` is below the margin.
fn hinge_above(tape: &mut Tape, x: Var, margin: f64) -> Result<Var> {
    let d = tape.affine(x, -1.0, margin)?;
    tape.relu(d)
}

/// `max(0, margin + x)`: positive while `x` is above `-margin`.
fn hinge_below(tape: &mut Tape, x: Var, margin: f64) -> Result<Var> {
    let d = tape.affine(x, 1.0, margin)?;
    tape.relu(d)
}

fn expect_rank2(tape: &Tape, g: Var, op: &'static str) -> Result<()> {
    if tape.shape(g).len() == 2 {
        Ok(())
    } else {
        Err(Error::invalid(
            op,
            format!("expected batch × units preactivations, got {:?}", tape.shape(g)),
        ))
    }
}

/// Per-unit deficits of an N×n preactivation matrix:
/// `xi_plus[j] = max(0, margin - max_i G[i,j])`,
/// `xi_minus[j] = max(0, margin + min_i G[i,j])`.
pub fn unit_deficits(tape: &mut Tape, g: Var, margin: f64) -> Result<(Var, Var)> {
    expect_rank2(tape, g, "unit_deficits")?;
    unit_deficits_from_extrema(tape, g, g, margin)
}

fn unit_deficits_from_extrema(
    tape: &mut Tape,
    gmax: Var,
    gmin: Var,
    margin: f64,
) -> Result<(Var, Var)> {
    if tape.shape(gmax)[0] == 0 {
        return Err(Error::EmptyReduction {
            op: "unit_deficits",
            shape: tape.shape(gmax).to_vec(),
            axes: vec![0],
        });
    }
    let hi = tape.reduce_extrema(gmax, &[0], Extremum::Max)?;
    let lo = tape.reduce_extrema(gmin, &[0], Extremum::Min)?;
    Ok((hinge_above(tape, hi, margin)?, hinge_below(tape, lo, margin)?))
}

/// Per-sample deficits of an N×n preactivation matrix:
/// `psi_plus[i] = max(0, margin - max_j G[i,j])`,
/// `psi_minus[i] = max(0, margin + min_j G[i,j])`.
pub fn point_deficits(tape: &mut Tape, g: Var, margin: f64) -> Result<(Var, Var)> {
    expect_rank2(tape, g, "point_deficits")?;
    point_deficits_from_extrema(tape, g, g, margin)
}

fn point_deficits_from_extrema(
    tape: &mut Tape,
    gmax: Var,
    gmin: Var,
    margin: f64,
) -> Result<(Var, Var)> {
    let hi = tape.reduce_extrema(gmax, &[1], Extremum::Max)?;
    let lo = tape.reduce_extrema(gmin, &[1], Extremum::Min)?;
    Ok((hinge_above(tape, hi, margin)?, hinge_below(tape, lo, margin)?))
}

/// Spatial maximum and minimum of every feature map of an N×C×H×W tensor,
/// each returned as N×C.
pub fn conv_margin_reduce(tape: &mut Tape, g4: Var) -> Result<(Var, Var)> {
    if tape.shape(g4).len() != 4 {
        return Err(Error::invalid(
            "conv_margin_reduce",
            format!("expected N×C×H×W, got {:?}", tape.shape(g4)),
        ));
    }
    let hi = tape.reduce_extrema(g4, &[2, 3], Extremum::Max)?;
    let lo = tape.reduce_extrema(g4, &[2, 3], Extremum::Min)?;
    Ok((hi, lo))
}

/// Deficits of one hidden layer, dense (N×n) or convolutional (N×C×H×W).
pub fn layer_deficits(tape: &mut Tape, g: Var, margin: f64) -> Result<LayerDeficits> {
    let (gmax, gmin) = match tape.shape(g).len() {
        2 => (g, g),
        4 => conv_margin_reduce(tape, g)?,
        _ => {
            return Err(Error::invalid(
                "layer_deficits",
                format!("unsupported preactivation shape {:?}", tape.shape(g)),
            ))
        }
    };
    let (xi_plus, xi_minus) = unit_deficits_from_extrema(tape, gmax, gmin, margin)?;
    let (psi_plus, psi_minus) = point_deficits_from_extrema(tape, gmax, gmin, margin)?;
    Ok(LayerDeficits {
        xi_plus,
        xi_minus,
        psi_plus,
        psi_minus,
    })
}

/// Deficits of every hidden layer of a forward trace.
pub fn deficits(tape: &mut Tape, trace: &ForwardTrace, margin: f64) -> Result<DeficitSet> {
    if trace.preactivations.is_empty() {
        return Err(Error::invalid("deficits", "trace has no hidden preactivations"));
    }
    let layers = trace
        .preactivations
        .iter()
        .map(|&g| layer_deficits(tape, g, margin))
        .collect::<Result<_>>()?;
    Ok(DeficitSet { layers })
}

/// Reduces all deficits to the scalar penalty `P`.
///
/// The 2-norm has a zero subgradient when every deficit is zero.
pub fn aggregate(tape: &mut Tape, set: &DeficitSet, mode: Aggregation) -> Result<Var> {
    let count = set.len(tape);
    if count == 0 {
        return Err(Error::invalid("aggregate", "no deficit entries"));
    }
    let mut total: Option<Var> = None;
    for part in set.layers.iter().flat_map(|l| l.parts()) {
        if tape.value(part).is_empty() {
            continue;
        }
        let s = match mode {
            Aggregation::Norm2 => tape.sum_squares(part)?,
            Aggregation::Mean | Aggregation::Norm1 => tape.sum(part)?,
        };
        total = Some(match total {
            None => s,
            Some(t) => tape.add(t, s)?,
        });
    }
    let total = total.expect("count > 0 implies a nonempty part");
    match mode {
        Aggregation::Norm1 => Ok(total),
        Aggregation::Mean => tape.affine(total, 1.0 / count as f64, 0.0),
        Aggregation::Norm2 => tape.sqrt(total),
    }
}

/// Scalar nodes of the regularized objective.
#[derive(Clone, Debug)]
pub struct JumpstartLoss {
    /// `base + lambda * penalty`
    pub total: Var,
    /// Mean softmax cross-entropy.
    pub base: Var,
    /// Aggregated deficits `P`, before scaling by lambda.
    pub penalty: Var,
    pub deficits: DeficitSet,
}

/// Cross-entropy plus `lambda` times the aggregated deficits of `trace`.
pub fn jumpstart_loss(
    tape: &mut Tape,
    trace: &ForwardTrace,
    labels: &[usize],
    config: &PenaltyConfig,
) -> Result<JumpstartLoss> {
    config.validate()?;
    let base = tape.softmax_cross_entropy(trace.logits, labels)?;
    let deficits = deficits(tape, trace, config.margin)?;
    let penalty = aggregate(tape, &deficits, config.aggregation)?;
    let scaled = tape.affine(penalty, config.lambda, 0.0)?;
    let total = tape.add(base, scaled)?;
    Ok(JumpstartLoss {
        total,
        base,
        penalty,
        deficits,
    })
}
