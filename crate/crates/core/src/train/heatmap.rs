use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

/// Mean of one metric per (depth, width) for one penalty variant.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub variant: String,
    /// Ascending.
    pub depths: Vec<usize>,
    /// Ascending.
    pub widths: Vec<usize>,
    /// `cells[depth][width]`; `None` where no run reported the metric.
    pub cells: Vec<Vec<Option<f64>>>,
}

/// Numeric columns of the results CSV that can be plotted.
pub const HEATMAP_METRICS: &[&str] = &[
    "final_train_acc",
    "final_val_acc",
    "best_val_acc",
    "dead_units",
    "linear_units",
    "dead_layers",
    "wall_seconds",
];

struct Cell {
    sum: f64,
    count: usize,
}

/// Averages `metric` over seeds for every variant, depth and width in a
/// results CSV. All heatmaps share the union of depths and widths.
pub fn heatmaps(csv_path: impl AsRef<Path>, metric: &str) -> Result<Vec<Heatmap>> {
    let mut reader = csv::Reader::from_path(csv_path.as_ref())?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("results CSV has no {name:?} column")))
    };
    let depth_col = column("depth")?;
    let width_col = column("width")?;
    let lambda_col = column("lambda")?;
    let agg_col = column("aggregation")?;
    let margin_col = column("margin")?;
    let metric_col = column(metric)?;

    let mut depths = BTreeSet::new();
    let mut widths = BTreeSet::new();
    let mut groups: BTreeMap<String, BTreeMap<(usize, usize), Cell>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let parse_usize = |col: usize| -> Result<usize> {
            record[col]
                .parse()
                .map_err(|_| Error::Config(format!("bad integer {:?} in results CSV", &record[col])))
        };
        let depth = parse_usize(depth_col)?;
        let width = parse_usize(width_col)?;
        depths.insert(depth);
        widths.insert(width);
        let variant = if &record[agg_col] == "none" {
            "baseline".to_string()
        } else {
            // reformat so `1.0` and `1` name the same variant
            let num = |col: usize| -> String {
                record[col]
                    .parse::<f64>()
                    .map_or_else(|_| record[col].to_string(), |v| v.to_string())
            };
            format!("{}-l{}-m{}", &record[agg_col], num(lambda_col), num(margin_col))
        };
        let cells = groups.entry(variant).or_default();
        let raw = &record[metric_col];
        if raw.is_empty() {
            continue;
        }
        let value: f64 = raw
            .parse()
            .map_err(|_| Error::Config(format!("bad {metric} value {raw:?} in results CSV")))?;
        let cell = cells.entry((depth, width)).or_insert(Cell { sum: 0.0, count: 0 });
        cell.sum += value;
        cell.count += 1;
    }

    let depths: Vec<usize> = depths.into_iter().collect();
    let widths: Vec<usize> = widths.into_iter().collect();
    Ok(groups
        .into_iter()
        .map(|(variant, cells)| Heatmap {
            cells: depths
                .iter()
                .map(|&d| {
                    widths
                        .iter()
                        .map(|&w| cells.get(&(d, w)).map(|c| c.sum / c.count as f64))
                        .collect()
                })
                .collect(),
            variant,
            depths: depths.clone(),
            widths: widths.clone(),
        })
        .collect())
}

/// Writes the heatmaps of `metric` as a dense matrix CSV (`variant,depth`
/// then one column per width; missing cells left empty) and as a long-format
/// CSV with one `variant,depth,width,value` line per populated cell.
pub fn export_heatmap(
    csv_path: impl AsRef<Path>,
    metric: &str,
    matrix_out: impl AsRef<Path>,
    long_out: impl AsRef<Path>,
) -> Result<Vec<Heatmap>> {
    let maps = heatmaps(csv_path, metric)?;

    let mut matrix = csv::Writer::from_path(matrix_out.as_ref())?;
    let mut header = vec!["variant".to_string(), "depth".to_string()];
    if let Some(first) = maps.first() {
        header.extend(first.widths.iter().map(|w| w.to_string()));
    }
    matrix.write_record(&header)?;
    for map in &maps {
        for (d, row) in map.depths.iter().zip(&map.cells) {
            let mut line = vec![map.variant.clone(), d.to_string()];
            line.extend(row.iter().map(|c| c.map_or(String::new(), |v| v.to_string())));
            matrix.write_record(&line)?;
        }
    }
    matrix.flush().map_err(|e| Error::io(matrix_out.as_ref(), e))?;

    let mut long = csv::Writer::from_path(long_out.as_ref())?;
    long.write_record(["variant", "depth", "width", metric])?;
    for map in &maps {
        for (d, row) in map.depths.iter().zip(&map.cells) {
            for (w, c) in map.widths.iter().zip(row) {
                if let Some(v) = c {
                    long.write_record([&map.variant, &d.to_string(), &w.to_string(), &v.to_string()])?;
                }
            }
        }
    }
    long.flush().map_err(|e| Error::io(long_out.as_ref(), e))?;
    Ok(maps)
}
