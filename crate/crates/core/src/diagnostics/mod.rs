//! Dead, linear and nonlinear units and points, and the random-mortality model.

mod census;
mod mortality;
mod probe;

pub use census::{census, Census, CensusAccumulator, LayerSummary, PointState, State, UnitState};
pub use mortality::{mortality_analytic, mortality_monte_carlo, Mortality, MortalityEstimate, MortalityParams};
pub use probe::{dead_layer_gradient_probe, DeadLayerProbe};
