//! Probability that units, layers or training points are dead at random.
//!
//! Model: every unit is dead independently with probability `p`, and every
//! (sample, unit) pair fails to activate independently with probability `q`.
//! A layer of width `n` is then dead with probability `pⁿ`, and a sample is a
//! dead point at that layer with probability `qⁿ`.
//!
//! Two "at least one" quantities are reported for units. The expression
//! `1 - ∏(1-p)^{n_ℓ}` is the probability that at least one *unit* is dead;
//! the probability that at least one *layer* is dead is `1 - ∏(1 - p^{n_ℓ})`.
//! They differ as soon as some layer has more than one unit.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MortalityParams {
    /// Probability that a unit is dead.
    pub p: f64,
    /// Probability that a sample does not activate a unit.
    pub q: f64,
    pub layer_widths: Vec<usize>,
    pub trials: u64,
}

impl MortalityParams {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        prob("p", self.p)?;
        prob("q", self.q)?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must be nonempty and positive, got {:?}",
                self.layer_widths
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mortality {
    /// `p^{n_ℓ}` per layer.
    pub per_layer_dead: Vec<f64>,
    /// At least one dead unit anywhere: `1 - ∏(1-p)^{n_ℓ}`.
    pub any_unit_dead: f64,
    /// At least one dead layer: `1 - ∏(1 - p^{n_ℓ})`.
    pub any_layer_dead: f64,
    /// `q^{n_ℓ}` per layer.
    pub point_dead_layer: Vec<f64>,
    /// Dead point at one or more layers: `1 - ∏(1 - q^{n_ℓ})`.
    pub point_dead_any: f64,
}

/// Monte-Carlo frequencies and their standard errors `sqrt(f(1-f)/trials)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MortalityEstimate {
    pub mean: Mortality,
    pub stderr: Mortality,
}

pub fn mortality_analytic(params: &MortalityParams) -> Result<Mortality> {
    params.validate()?;
    let (p, q) = (params.p, params.q);
    let widths = &params.layer_widths;
    let pow = |base: f64, n: usize| base.powi(n as i32);
    let per_layer_dead: Vec<f64> = widths.iter().map(|&n| pow(p, n)).collect();
    let point_dead_layer: Vec<f64> = widths.iter().map(|&n| pow(q, n)).collect();
    Ok(Mortality {
        any_unit_dead: 1.0 - widths.iter().map(|&n| pow(1.0 - p, n)).product::<f64>(),
        any_layer_dead: 1.0 - per_layer_dead.iter().map(|x| 1.0 - x).product::<f64>(),
        point_dead_any: 1.0 - point_dead_layer.iter().map(|x| 1.0 - x).product::<f64>(),
        per_layer_dead,
        point_dead_layer,
    })
}

/// Simulates `params.trials` independent networks unit by unit.
pub fn mortality_monte_carlo<R: Rng + ?Sized>(
    params: &MortalityParams,
    rng: &mut R,
) -> Result<MortalityEstimate> {
    params.validate()?;
    let layers = params.layer_widths.len();
    let mut layer_dead = vec![0u64; layers];
    let mut point_dead = vec![0u64; layers];
    let (mut any_unit, mut any_layer, mut any_point) = (0u64, 0u64, 0u64);

    for _ in 0..params.trials {
        let (mut unit_hit, mut layer_hit, mut point_hit) = (false, false, false);
        for (l, &n) in params.layer_widths.iter().enumerate() {
            let mut dead_units = 0;
            let mut failed = 0;
            for _ in 0..n {
                if rng.gen::<f64>() < params.p {
                    dead_units += 1;
                }
                if rng.gen::<f64>() < params.q {
                    failed += 1;
                }
            }
            unit_hit |= dead_units > 0;
            if dead_units == n {
                layer_dead[l] += 1;
                layer_hit = true;
            }
            if failed == n {
                point_dead[l] += 1;
                point_hit = true;
            }
        }
        any_unit += u64::from(unit_hit);
        any_layer += u64::from(layer_hit);
        any_point += u64::from(point_hit);
    }

    let t = params.trials as f64;
    let freq = |c: u64| c as f64 / t;
    let se = |c: u64| {
        let f = freq(c);
        (f * (1.0 - f) / t).sqrt()
    };
    Ok(MortalityEstimate {
        mean: Mortality {
            per_layer_dead: layer_dead.iter().map(|&c| freq(c)).collect(),
            any_unit_dead: freq(any_unit),
            any_layer_dead: freq(any_layer),
            point_dead_layer: point_dead.iter().map(|&c| freq(c)).collect(),
            point_dead_any: freq(any_point),
        },
        stderr: Mortality {
            per_layer_dead: layer_dead.iter().map(|&c| se(c)).collect(),
            any_unit_dead: se(any_unit),
            any_layer_dead: se(any_layer),
            point_dead_layer: point_dead.iter().map(|&c| se(c)).collect(),
            point_dead_any: se(any_point),
        },
    })
}
