use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::run::{train, RunRecord};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::penalty::PenaltyConfig;

/// Depth × width × penalty × seed grid. A `None` penalty is the
/// cross-entropy-only baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub penalties: Vec<Option<PenaltyConfig>>,
    pub seeds: Vec<u64>,
}

/// One cell of the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub depth: usize,
    pub width: usize,
    pub penalty: Option<PenaltyConfig>,
    pub seed: u64,
}

impl Cell {
    pub fn run_id(&self) -> String {
        format!(
            "d{}-w{}-{}-s{}",
            self.depth,
            self.width,
            variant_label(self.penalty.as_ref()),
            self.seed
        )
    }
}

/// `baseline`, or aggregation, λ and margin such as `norm1-l0.0001-m1`.
pub fn variant_label(penalty: Option<&PenaltyConfig>) -> String {
    match penalty {
        None => "baseline".to_string(),
        Some(p) => format!("{}-l{}-m{}", p.aggregation, p.lambda, p.margin),
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty()
            || self.widths.is_empty()
            || self.penalties.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::Config("sweep grid has an empty axis".into()));
        }
        for p in self.penalties.iter().flatten() {
            p.validate()?;
        }
        Ok(())
    }

    /// Cells in depth, width, penalty, seed order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &depth in &self.depths {
            for &width in &self.widths {
                for &penalty in &self.penalties {
                    for &seed in &self.seeds {
                        out.push(Cell {
                            depth,
                            width,
                            penalty,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

/// One line of the results CSV. Empty metric fields mean the run failed
/// before producing them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub run_id: String,
    pub seed: u64,
    pub depth: usize,
    pub width: usize,
    pub lambda: f64,
    /// `none` for the baseline.
    pub aggregation: String,
    pub margin: Option<f64>,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub final_train_acc: Option<f64>,
    pub final_val_acc: Option<f64>,
    pub best_val_acc: Option<f64>,
    pub dead_units: Option<usize>,
    pub linear_units: Option<usize>,
    pub dead_layers: Option<usize>,
    pub status: String,
    pub wall_seconds: Option<f64>,
}

impl SweepRow {
    fn blank(cell: &Cell, config: &TrainConfig, status: String) -> Self {
        SweepRow {
            run_id: cell.run_id(),
            seed: cell.seed,
            depth: cell.depth,
            width: cell.width,
            lambda: config.lambda(),
            aggregation: cell
                .penalty
                .map_or("none".to_string(), |p| p.aggregation.to_string()),
            margin: cell.penalty.map(|p| p.margin),
            lr: config.learning_rate,
            epochs: config.epochs,
            batch: config.batch_size,
            final_train_acc: None,
            final_val_acc: None,
            best_val_acc: None,
            dead_units: None,
            linear_units: None,
            dead_layers: None,
            status,
            wall_seconds: None,
        }
    }

    pub fn from_record(cell: &Cell, r: &RunRecord) -> Self {
        SweepRow {
            final_train_acc: Some(r.final_train_acc),
            final_val_acc: r.final_val_acc,
            best_val_acc: r.best_val_acc,
            dead_units: r.census.map(|c| c.dead_units),
            linear_units: r.census.map(|c| c.linear_units),
            dead_layers: r.census.map(|c| c.dead_layers),
            wall_seconds: Some(r.wall_seconds),
            ..SweepRow::blank(cell, &r.config, r.status.to_string())
        }
    }

    fn new(cell: &Cell, config: &TrainConfig, outcome: Result<RunRecord>) -> Self {
        match outcome {
            Ok(r) => SweepRow::from_record(cell, &r),
            Err(e) => SweepRow::blank(cell, config, format!("failed: {e}")),
        }
    }

    /// Completed with final train accuracy at or above `threshold`.
    pub fn succeeded(&self, threshold: f64) -> bool {
        self.status == "completed" && self.final_train_acc.is_some_and(|a| a >= threshold)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepOptions {
    /// Runs executed concurrently.
    pub threads: usize,
    /// Stop after this many new runs; `None` runs the whole grid.
    pub max_runs: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            threads: thread::available_parallelism().map_or(1, |n| n.get()),
            max_runs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    /// Cells trained by this call.
    pub ran: usize,
    /// Cells already present in the CSV.
    pub skipped: usize,
    /// Every row in the CSV afterwards.
    pub rows: Vec<SweepRow>,
}

/// Reads every row of a results CSV.
pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Trains every grid cell whose run id is not yet in `csv_path`, appending one
/// row per run as it finishes.
///
/// `base` supplies everything but depth, width, penalty and seed. Runs execute
/// on up to `options.threads` threads; a failing run is recorded in its row's
/// status and the sweep carries on.
pub fn sweep(
    grid: &SweepGrid,
    base: &TrainConfig,
    dataset: &Dataset,
    csv_path: impl AsRef<Path>,
    options: SweepOptions,
) -> Result<SweepOutcome> {
    grid.validate()?;
    base.validate()?;
    let csv_path = csv_path.as_ref();
    let existing = if csv_path.exists() && fs::metadata(csv_path).map_or(0, |m| m.len()) > 0 {
        read_rows(csv_path)?
    } else {
        Vec::new()
    };
    let done: HashSet<&str> = existing.iter().map(|r| r.run_id.as_str()).collect();
    let all = grid.cells();
    let mut todo: Vec<Cell> = all
        .iter()
        .filter(|c| !done.contains(c.run_id().as_str()))
        .copied()
        .collect();
    let skipped = all.len() - todo.len();
    if let Some(max) = options.max_runs {
        todo.truncate(max);
    }

    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(csv_path)
        .map_err(|e| Error::io(csv_path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(existing.is_empty() && fs::metadata(csv_path).map_or(0, |m| m.len()) == 0)
        .from_writer(file);

    let configs: Vec<TrainConfig> = todo
        .iter()
        .map(|c| TrainConfig {
            arch: base.arch.resized(c.depth, c.width),
            penalty: c.penalty,
            seed: c.seed,
            ..base.clone()
        })
        .collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let mut new_rows = Vec::with_capacity(todo.len());
    thread::scope(|scope| -> Result<()> {
        for _ in 0..options.threads.max(1).min(todo.len().max(1)) {
            let tx = tx.clone();
            let (next, todo, configs) = (&next, &todo, &configs);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= todo.len() {
                    break;
                }
                let outcome = train(&configs[i], dataset);
                if tx.send(SweepRow::new(&todo[i], &configs[i], outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for row in rx {
            writer.serialize(&row)?;
            writer.flush().map_err(|e| Error::io(csv_path, e))?;
            new_rows.push(row);
        }
        Ok(())
    })?;

    let ran = new_rows.len();
    let mut rows = existing;
    rows.extend(new_rows);
    Ok(SweepOutcome { ran, skipped, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_moons;

    fn setup() -> (SweepGrid, TrainConfig, Dataset) {
        let grid = SweepGrid {
            depths: vec![1, 2],
            widths: vec![2, 3],
            penalties: vec![None],
            seeds: vec![0],
        };
        let base = TrainConfig {
            epochs: 2,
            batch_size: 16,
            eval_every: 1,
            ..TrainConfig::moons(1, 1)
        };
        (grid, base, make_moons(20, 0.1, 0).unwrap())
    }

    #[test]
    fn one_row_per_cell() {
        let (grid, base, d) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let out = sweep(&grid, &base, &d, &path, SweepOptions { threads: 2, max_runs: None }).unwrap();
        assert_eq!(out.ran, 4);
        let rows = read_rows(&path).unwrap();
        assert_eq!(rows.len(), 4);
        let cells: HashSet<(usize, usize)> = rows.iter().map(|r| (r.depth, r.width)).collect();
        assert_eq!(cells.len(), 4);
        assert!(rows.iter().all(|r| r.status == "completed" && r.aggregation == "none"));
        let header = fs::read_to_string(&path).unwrap();
        assert!(header.starts_with(
            "run_id,seed,depth,width,lambda,aggregation,margin,lr,epochs,batch,final_train_acc,\
             final_val_acc,best_val_acc,dead_units,linear_units,dead_layers,status,wall_seconds\n"
        ));
    }

    #[test]
    fn resume_runs_only_the_rest() {
        let (grid, base, d) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let first = sweep(&grid, &base, &d, &path, SweepOptions { threads: 1, max_runs: Some(2) }).unwrap();
        assert_eq!(first.ran, 2);
        let second = sweep(&grid, &base, &d, &path, SweepOptions { threads: 1, max_runs: None }).unwrap();
        assert_eq!((second.ran, second.skipped), (2, 2));
        let ids: Vec<String> = read_rows(&path).unwrap().into_iter().map(|r| r.run_id).collect();
        assert_eq!(ids.len(), 4);
        assert_eq!(ids.iter().collect::<HashSet<_>>().len(), 4);
        let third = sweep(&grid, &base, &d, &path, SweepOptions::default()).unwrap();
        assert_eq!(third.ran, 0);
    }

    #[test]
    fn failing_cell_is_recorded() {
        let (mut grid, base, d) = setup();
        grid.depths = vec![1];
        grid.widths = vec![0, 2];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let out = sweep(&grid, &base, &d, &path, SweepOptions { threads: 1, max_runs: None }).unwrap();
        assert_eq!(out.rows.len(), 2);
        let bad = out.rows.iter().find(|r| r.width == 0).unwrap();
        assert!(bad.status.starts_with("failed"));
        assert_eq!(bad.final_train_acc, None);
    }
}
