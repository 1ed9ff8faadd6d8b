//! The `jumpstart` command line.
//!
//! Settings resolve in three layers: a preset, then an optional TOML config
//! file merged over it, then individual flags. Every command validates the
//! resolved settings before doing any work.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or configuration, 2 for
//! failures while running (unreadable files, a diverged run).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diagnostics::{census, mortality_analytic, mortality_monte_carlo, MortalityParams};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Head, Init};
use crate::penalty::Aggregation;
use crate::protocol::{overlay, DataSource, Preset, Protocol, SweepSpec};
use crate::train::{
    export_heatmap, sweep, train_model, ArchSpec, RunStatus, SweepOptions, SweepRow, HEATMAP_METRICS,
};

#[derive(Debug, Parser)]
#[command(name = "jumpstart", version, about = "Train deep, thin ReLU networks with jumpstart regularization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network and write its record, curves and checkpoint.
    Train(TrainArgs),
    /// Train every cell of a depth × width × λ × seed grid, resuming if the
    /// results file already has rows.
    Sweep(SweepArgs),
    /// Classify every unit and point of a saved model as dead, linear or
    /// nonlinear over a dataset.
    Diagnose(DiagnoseArgs),
    /// Compare the analytic dead-unit and dead-layer probabilities with a
    /// Monte-Carlo simulation.
    SimulateMortality(MortalityArgs),
    /// Turn a sweep results file into depth × width matrices of one metric.
    ExportHeatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Built-in protocol: moons, mnist-desk or cifar10.
    #[arg(long, default_value = "moons")]
    pub preset: String,
    /// TOML file merged over the preset (tables `data`, `train`, `sweep`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Network family: mlp or conv [moons: mlp; mnist-desk, cifar10: conv].
    #[arg(long)]
    pub arch: Option<String>,
    /// Hidden layers [moons: 5; mnist-desk: 16; cifar10: 10].
    #[arg(long)]
    pub depth: Option<usize>,
    /// Units per dense layer or filters per conv layer [moons: 3; mnist-desk: 2; cifar10: 8].
    #[arg(long)]
    pub width: Option<usize>,
    /// Conv head: flatten or global-max-avg-pool [mnist-desk: flatten; cifar10: global-max-avg-pool].
    #[arg(long)]
    pub head: Option<String>,
    /// Weight init: glorot-uniform or kaiming-uniform [moons, mnist-desk: glorot-uniform; cifar10: kaiming-uniform].
    #[arg(long)]
    pub init: Option<String>,
    /// Training epochs [moons: 5000; mnist-desk: 20; cifar10: 400].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size [moons: 85; mnist-desk: 1024; cifar10: 128].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam step size [moons: 0.01; mnist-desk, cifar10: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Penalty coefficient, 0 for plain cross-entropy [moons: 1e-4; mnist-desk: 1e-8; cifar10: 0.001].
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Margin that preactivations must clear [all presets: 1].
    #[arg(long, allow_negative_numbers = true)]
    pub margin: Option<f64>,
    /// Deficit aggregation: mean, norm1 or norm2 [moons, mnist-desk: norm1; cifar10: norm2].
    #[arg(long)]
    pub aggregation: Option<String>,
    /// Seed for initialization and minibatch order [all presets: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs between accuracy evaluations [moons: 100; mnist-desk, cifar10: 1].
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Final train accuracy counted as success [moons, cifar10: 0.95; mnist-desk: 0.9].
    #[arg(long)]
    pub success_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset: moons, mnist, cifar10, cifar100-coarse or cifar100-fine.
    #[arg(long)]
    pub data: Option<String>,
    /// MNIST image IDX file.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// MNIST label IDX file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// CIFAR binary batch file; repeat for several.
    #[arg(long = "cifar-file")]
    pub cifar_files: Vec<PathBuf>,
    /// Points generated for moons [100].
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Gaussian noise for moons [0.1].
    #[arg(long, allow_negative_numbers = true)]
    pub noise: Option<f64>,
    /// Training subset size [moons: 85; mnist-desk: 5000; cifar10: all].
    #[arg(long)]
    pub train_n: Option<usize>,
    /// Validation subset size [moons: 15; mnist-desk: 1000; cifar10: 0].
    #[arg(long)]
    pub val_n: Option<usize>,
    /// Keep class proportions when subsetting [mnist-desk: on].
    #[arg(long)]
    pub stratified: bool,
    /// Seed for moons noise and subset shuffling [0].
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Run directory [runs/train-<unix time>].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Comma-separated depths [moons: 5,10,20,40,60].
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<usize>>,
    /// Comma-separated widths [moons: 2,3,5,10].
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    /// Comma-separated λ values, 0 meaning the baseline [moons: 0,1e-4].
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Comma-separated seeds [moons: 0].
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Concurrent runs [all cores].
    #[arg(long)]
    pub threads: Option<usize>,
    /// Run directory holding results.csv; reuse it to resume [runs/sweep-<unix time>].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Model checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Protocol whose data settings apply [moons].
    #[arg(long, default_value = "moons")]
    pub preset: String,
    /// TOML file merged over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Census CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Samples per forward pass [1024].
    #[arg(long, default_value_t = 1024)]
    pub batch_size: usize,
    /// Unused by the census itself; accepted so every command takes a seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MortalityArgs {
    /// Probability that a unit is dead.
    #[arg(long)]
    pub p: f64,
    /// Probability that a sample leaves a unit inactive [0.5].
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    /// Comma-separated layer widths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub widths: Vec<usize>,
    /// Simulated networks [1000000].
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Results CSV written by `sweep`.
    #[arg(long)]
    pub results: PathBuf,
    /// Column to average: final_train_acc, final_val_acc, best_val_acc,
    /// dead_units, linear_units, dead_layers or wall_seconds.
    #[arg(long, default_value = "final_train_acc")]
    pub metric: String,
    /// Matrix CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Long-format CSV [<out>-long.csv].
    #[arg(long)]
    pub long: Option<PathBuf>,
    /// Accepted so every command takes a seed; the export is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `argv`, runs the command and returns the process exit code.
/// Errors go to stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 1 for bad input, 2 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument { .. }
        | Error::Architecture(_)
        | Error::LabelOutOfRange { .. }
        | Error::Precondition(_) => 1,
        _ => 2,
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::SimulateMortality(a) => cmd_mortality(a),
        Command::ExportHeatmap(a) => cmd_heatmap(a),
    }
}

fn base_protocol(preset: &str, config: Option<&Path>) -> Result<Protocol> {
    let base = preset.parse::<Preset>()?.protocol();
    match config {
        None => Ok(base),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            overlay(&base, &text)
        }
    }
}

fn apply_data(p: &mut Protocol, a: &DataArgs) -> Result<()> {
    let d = &mut p.data;
    if let Some(s) = &a.data {
        d.source = s.parse::<DataSource>()?;
    }
    if a.images.is_some() {
        d.images = a.images.clone();
    }
    if a.labels.is_some() {
        d.labels = a.labels.clone();
    }
    if !a.cifar_files.is_empty() {
        d.files = a.cifar_files.clone();
    }
    d.n_samples = a.n_samples.unwrap_or(d.n_samples);
    d.noise = a.noise.unwrap_or(d.noise);
    if a.train_n.is_some() {
        d.train_n = a.train_n;
    }
    if a.val_n.is_some() {
        d.val_n = a.val_n;
    }
    d.stratified |= a.stratified;
    d.seed = a.data_seed.unwrap_or(d.seed);
    Ok(())
}

fn resolve(a: &ProtocolArgs) -> Result<Protocol> {
    let mut p = base_protocol(&a.preset, a.config.as_deref())?;
    apply_data(&mut p, &a.data)?;
    let t = &mut p.train;
    let depth = a.depth.unwrap_or(t.arch.depth());
    let width = a.width.unwrap_or(t.arch.width());
    let head = match (&a.head, t.arch) {
        (Some(h), _) => parse_head(h)?,
        (None, ArchSpec::Conv { head, .. }) => head,
        (None, ArchSpec::Mlp { .. }) => Head::Flatten,
    };
    let kind = match a.arch.as_deref() {
        Some("mlp") => "mlp",
        Some("conv") => "conv",
        Some(other) => return Err(Error::Config(format!("--arch {other:?}: expected mlp or conv"))),
        None => match t.arch {
            ArchSpec::Mlp { .. } => "mlp",
            ArchSpec::Conv { .. } => "conv",
        },
    };
    t.arch = if kind == "mlp" {
        ArchSpec::Mlp { depth, width }
    } else {
        ArchSpec::Conv {
            depth,
            filters: width,
            head,
        }
    };
    if let Some(i) = &a.init {
        t.init = match i.as_str() {
            "glorot-uniform" => Init::GlorotUniform,
            "kaiming-uniform" => Init::KaimingUniform,
            other => {
                return Err(Error::Config(format!(
                    "--init {other:?}: expected glorot-uniform or kaiming-uniform"
                )))
            }
        };
    }
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.learning_rate = a.lr.unwrap_or(t.learning_rate);
    t.seed = a.seed.unwrap_or(t.seed);
    t.eval_every = a.eval_every.unwrap_or(t.eval_every);
    t.success_threshold = a.success_threshold.unwrap_or(t.success_threshold);
    if a.lambda.is_some() || a.margin.is_some() || a.aggregation.is_some() {
        let mut pen = t.penalty.unwrap_or_default();
        pen.lambda = a.lambda.unwrap_or(pen.lambda);
        pen.margin = a.margin.unwrap_or(pen.margin);
        if let Some(s) = &a.aggregation {
            pen.aggregation = s.parse::<Aggregation>()?;
        }
        t.penalty = Some(pen);
    }
    p.validate()?;
    Ok(p)
}

fn parse_head(s: &str) -> Result<Head> {
    match s {
        "flatten" => Ok(Head::Flatten),
        "global-max-avg-pool" => Ok(Head::GlobalMaxAvgPool),
        other => Err(Error::Config(format!(
            "--head {other:?}: expected flatten or global-max-avg-pool"
        ))),
    }
}

fn default_dir(command: &str) -> PathBuf {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    PathBuf::from("runs").join(format!("{command}-{secs}"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    #[serde(flatten)]
    settings: &'a T,
}

fn write_manifest<T: Serialize>(path: &Path, command: &str, settings: &T) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        settings,
    };
    let text = toml::to_string(&m).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    write_text(path, &text)
}

fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.toml");
    out.with_file_name(name)
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let p = resolve(&a.protocol)?;
    let dir = a.out.unwrap_or_else(|| default_dir("train"));
    create_dir(&dir)?;
    write_manifest(&dir.join("manifest.toml"), "train", &p)?;
    let dataset = p.data.load()?;
    let (model, record) = train_model(&p.train, &dataset)?;

    checkpoint::save(&model, dir.join("model.ckpt"))?;
    let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&dir.join("record.json"), &json)?;
    let mut curves = csv::Writer::from_path(dir.join("curves.csv"))?;
    for c in &record.curves {
        curves.serialize(c)?;
    }
    curves.flush().map_err(|e| Error::io(dir.join("curves.csv"), e))?;
    let cell = crate::train::Cell {
        depth: p.train.arch.depth(),
        width: p.train.arch.width(),
        penalty: p.train.penalty,
        seed: p.train.seed,
    };
    let mut run = csv::Writer::from_path(dir.join("run.csv"))?;
    run.serialize(SweepRow::from_record(&cell, &record))?;
    run.flush().map_err(|e| Error::io(dir.join("run.csv"), e))?;

    eprintln!(
        "{}: train acc {:.4}{}, {} -> {}",
        record.status,
        record.final_train_acc,
        record
            .final_val_acc
            .map_or(String::new(), |v| format!(", val acc {v:.4}")),
        if record.success { "success" } else { "below threshold" },
        dir.display()
    );
    Ok(match record.status {
        RunStatus::Completed => 0,
        RunStatus::Diverged { .. } => 2,
    })
}

fn cmd_sweep(a: SweepArgs) -> Result<i32> {
    let mut p = resolve(&a.protocol)?;
    let mut spec = p.sweep.clone().unwrap_or(SweepSpec {
        depths: vec![p.train.arch.depth()],
        widths: vec![p.train.arch.width()],
        lambdas: vec![p.train.lambda()],
        seeds: vec![p.train.seed],
        threads: None,
    });
    if let Some(v) = &a.depths {
        spec.depths = v.clone();
    }
    if let Some(v) = &a.widths {
        spec.widths = v.clone();
    }
    if let Some(v) = &a.lambdas {
        spec.lambdas = v.clone();
    }
    if let Some(v) = &a.seeds {
        spec.seeds = v.clone();
    } else if let Some(s) = a.protocol.seed {
        spec.seeds = vec![s];
    }
    if a.threads.is_some() {
        spec.threads = a.threads;
    }
    let grid = spec.grid(&p.train)?;
    p.sweep = Some(spec.clone());

    let dir = a.out.unwrap_or_else(|| default_dir("sweep"));
    create_dir(&dir)?;
    write_manifest(&dir.join("manifest.toml"), "sweep", &p)?;
    let dataset = p.data.load()?;
    let options = SweepOptions {
        threads: spec.threads.unwrap_or(SweepOptions::default().threads),
        max_runs: None,
    };
    let out = sweep(&grid, &p.train, &dataset, dir.join("results.csv"), options)?;
    let successes = out
        .rows
        .iter()
        .filter(|r| r.succeeded(p.train.success_threshold))
        .count();
    eprintln!(
        "ran {} runs, skipped {} already recorded; {successes}/{} successful -> {}",
        out.ran,
        out.skipped,
        out.rows.len(),
        dir.join("results.csv").display()
    );
    Ok(0)
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<i32> {
    let mut p = base_protocol(&a.preset, a.config.as_deref())?;
    apply_data(&mut p, &a.data)?;
    p.data.validate()?;
    if a.batch_size == 0 {
        return Err(Error::Config("--batch-size must be at least 1".into()));
    }
    write_manifest(&manifest_beside(&a.out), "diagnose", &p.data)?;
    let model = checkpoint::load(&a.checkpoint)?;
    let dataset = p.data.load()?;
    let c = census(&model, &dataset.inputs, a.batch_size)?;
    c.write_csv(&a.out)?;
    eprintln!(
        "{} dead, {} linear, {} nonlinear units; {} dead layers -> {}",
        c.dead_units(),
        c.linear_units(),
        c.nonlinear_units(),
        c.dead_layers(),
        a.out.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct MortalityRow {
    quantity: &'static str,
    layer: Option<usize>,
    analytic: f64,
    monte_carlo: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct MortalitySettings<'a> {
    p: f64,
    q: f64,
    widths: &'a [usize],
    trials: u64,
    seed: u64,
}

fn cmd_mortality(a: MortalityArgs) -> Result<i32> {
    let params = MortalityParams {
        p: a.p,
        q: a.q,
        layer_widths: a.widths.clone(),
        trials: a.trials,
    };
    params.validate()?;
    let settings = MortalitySettings {
        p: a.p,
        q: a.q,
        widths: &a.widths,
        trials: a.trials,
        seed: a.seed,
    };
    write_manifest(&manifest_beside(&a.out), "simulate-mortality", &settings)?;
    let exact = mortality_analytic(&params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let est = mortality_monte_carlo(&params, &mut rng)?;

    let mut rows = Vec::new();
    for l in 0..a.widths.len() {
        rows.push(MortalityRow {
            quantity: "layer_dead",
            layer: Some(l),
            analytic: exact.per_layer_dead[l],
            monte_carlo: est.mean.per_layer_dead[l],
            stderr: est.stderr.per_layer_dead[l],
        });
        rows.push(MortalityRow {
            quantity: "point_dead_at_layer",
            layer: Some(l),
            analytic: exact.point_dead_layer[l],
            monte_carlo: est.mean.point_dead_layer[l],
            stderr: est.stderr.point_dead_layer[l],
        });
    }
    for (quantity, x, m, s) in [
        ("any_unit_dead", exact.any_unit_dead, est.mean.any_unit_dead, est.stderr.any_unit_dead),
        ("any_layer_dead", exact.any_layer_dead, est.mean.any_layer_dead, est.stderr.any_layer_dead),
        ("point_dead_any_layer", exact.point_dead_any, est.mean.point_dead_any, est.stderr.point_dead_any),
    ] {
        rows.push(MortalityRow {
            quantity,
            layer: None,
            analytic: x,
            monte_carlo: m,
            stderr: s,
        });
    }
    let mut w = csv::Writer::from_path(&a.out)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    eprintln!(
        "any unit dead {:.6}, any layer dead {:.6} (simulated {:.6} ± {:.6}) -> {}",
        exact.any_unit_dead,
        exact.any_layer_dead,
        est.mean.any_layer_dead,
        est.stderr.any_layer_dead,
        a.out.display()
    );
    Ok(0)
}

fn cmd_heatmap(a: HeatmapArgs) -> Result<i32> {
    if !HEATMAP_METRICS.contains(&a.metric.as_str()) {
        return Err(Error::Config(format!(
            "--metric {:?}: expected one of {}",
            a.metric,
            HEATMAP_METRICS.join(", ")
        )));
    }
    let long = a.long.clone().unwrap_or_else(|| {
        let stem = a.out.file_stem().map_or("heatmap".into(), |s| s.to_string_lossy().into_owned());
        a.out.with_file_name(format!("{stem}-long.csv"))
    });
    #[derive(Serialize)]
    struct Settings<'a> {
        results: &'a Path,
        metric: &'a str,
        long: &'a Path,
    }
    write_manifest(
        &manifest_beside(&a.out),
        "export-heatmap",
        &Settings {
            results: &a.results,
            metric: &a.metric,
            long: &long,
        },
    )?;
    let maps = export_heatmap(&a.results, &a.metric, &a.out, &long)?;
    eprintln!("{} variant(s) -> {}", maps.len(), a.out.display());
    Ok(0)
}
