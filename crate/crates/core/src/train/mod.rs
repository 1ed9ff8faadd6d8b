//! Adam, single training runs and depth × width sweeps.

mod adam;
mod config;
mod heatmap;
mod run;
mod sweep;

pub use adam::{adam_step, AdamState};
pub use config::{ArchSpec, TrainConfig};
pub use heatmap::{export_heatmap, heatmaps, Heatmap, HEATMAP_METRICS};
pub use run::{accuracy, train, train_model, CensusSummary, EpochRecord, RunRecord, RunStatus};
pub use sweep::{read_rows, sweep, variant_label, Cell, SweepGrid, SweepOptions, SweepOutcome, SweepRow};
