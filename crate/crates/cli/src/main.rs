use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wifiloc_core::data::{
    generate_synthetic_campus_dataset, generate_synthetic_floor_dataset, load_dataset, write_store, write_ujiindoorloc,
    Dataset, DatasetKind, SyntheticCampusConfig, SyntheticFloorConfig,
};
use wifiloc_core::eval::{
    ap_mismatch, default_weight_pairs, evaluate_model, format_sci, render_report, sweep_class_weights,
    write_sweep_jsonl, MeanSd, MetricsReport, DEFAULT_SWEEP_SEEDS,
};
use wifiloc_core::models::{
    load_model, save_model, train_model, validation_split, ClassWeights, ModelMode, PipelineConfig, TrainedModel,
};
use wifiloc_core::nn::{Activation, OptimizerConfig, OptimizerKind};
use wifiloc_service::ServiceConfig;

#[derive(Debug)]
enum CliError {
    /// Bad invocation; exit code 2.
    Usage(String),
    /// Anything that failed while running; exit code 1.
    Runtime(String),
}

impl From<wifiloc_core::Error> for CliError {
    fn from(e: wifiloc_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "wifiloc", version, about = "Wi-Fi fingerprint indoor localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a dataset, print a summary and optionally write a cleaned copy.
    Ingest(IngestArgs),
    /// Train a model and write it with its per-epoch history.
    Train(TrainArgs),
    /// Score one or more models on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Train hierarchical models over a grid of class weights.
    Sweep(SweepArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Run the HTTP localization service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// UJIIndoorLoc CSV or fingerprint store.
    path: PathBuf,
    /// Write the parsed dataset here (store format for location data,
    /// UJIIndoorLoc layout for building/floor data).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Hyperparameters. Unset flags take the defaults of the chosen mode.
#[derive(Args, Clone)]
struct ModelFlags {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Seed for the train/validation split [default: --seed].
    #[arg(long)]
    split_seed: Option<u64>,
    /// Fraction of records used for training.
    #[arg(long)]
    train_ratio: Option<f64>,
    /// Mini-batch size for both phases.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Autoencoder widths, e.g. 64-8-64.
    #[arg(long)]
    sae_layers: Option<String>,
    #[arg(long)]
    sae_activation: Option<Activation>,
    #[arg(long)]
    sae_epochs: Option<usize>,
    #[arg(long)]
    sae_optimizer: Option<OptimizerKind>,
    #[arg(long)]
    sae_lr: Option<f64>,
    /// Classifier hidden widths, e.g. 64-32, or "none".
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    lr: Option<f64>,
    /// Classifier epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Building:floor loss weights (hierarchical mode).
    #[arg(long)]
    weights: Option<ClassWeights>,
    /// Keep the pretrained encoder fixed.
    #[arg(long)]
    freeze_encoder: bool,
}

fn parse_widths(s: &str) -> CliResult<Vec<usize>> {
    if s.eq_ignore_ascii_case("none") || s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(['-', ','])
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| CliError::Usage(format!("bad layer width '{w}' in '{s}'")))
        })
        .collect()
}

fn optimizer(kind: Option<OptimizerKind>, lr: Option<f64>, current: OptimizerConfig) -> OptimizerConfig {
    let mut cfg = match kind {
        Some(k) if k != current.kind => OptimizerConfig::default_for(k),
        _ => current,
    };
    if let Some(lr) = lr {
        cfg = cfg.with_learning_rate(lr);
    }
    cfg
}

impl ModelFlags {
    fn config(&self, mode: ModelMode) -> CliResult<PipelineConfig> {
        let mut cfg = PipelineConfig::for_mode(mode, self.seed);
        cfg.split_seed = self.split_seed.unwrap_or(self.seed);
        if let Some(r) = self.train_ratio {
            cfg.train_ratio = r;
        }
        if let Some(b) = self.batch_size {
            cfg.sae.batch_size = b;
            cfg.classifier.batch_size = b;
        }
        if let Some(l) = &self.sae_layers {
            cfg.sae.hidden_layers = parse_widths(l)?;
        }
        if let Some(a) = self.sae_activation {
            cfg.sae.activation = a;
        }
        if let Some(e) = self.sae_epochs {
            cfg.sae.epochs = e;
        }
        cfg.sae.optimizer = optimizer(self.sae_optimizer, self.sae_lr, cfg.sae.optimizer);
        if let Some(l) = &self.layers {
            cfg.classifier.hidden_layers = parse_widths(l)?;
        }
        if let Some(a) = self.activation {
            cfg.classifier.activation = a;
        }
        if let Some(d) = self.dropout {
            cfg.classifier.dropout_rate = d;
        }
        cfg.classifier.optimizer = optimizer(self.optimizer, self.lr, cfg.classifier.optimizer);
        if let Some(e) = self.epochs {
            cfg.classifier.epochs = e;
        }
        if let Some(w) = self.weights {
            if mode != ModelMode::Hierarchical {
                return Err(CliError::Usage("--weights only applies to hierarchical mode".into()));
            }
            cfg.classifier.class_weights = w;
        }
        cfg.classifier.freeze_encoder = self.freeze_encoder;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// hierarchical, flattened or floor-level.
    #[arg(long, default_value = "hierarchical")]
    mode: ModelMode,
    /// Training data (UJIIndoorLoc CSV or fingerprint store).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Per-epoch history as JSON lines [default: <out stem>.history.jsonl].
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    flags: ModelFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model file; repeat to report mean and standard deviation.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Score only the validation part of the model's own split of --data.
    #[arg(long)]
    validation_split: bool,
    /// Re-map the dataset onto each model's AP order instead of failing on
    /// a mismatch.
    #[arg(long)]
    align: bool,
    /// Write the reports as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    /// Held-out data scored instead of the validation split.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma-separated building:floor pairs [default: 1:1,2:1,5:1,10:1,20:1].
    #[arg(long = "grid", value_delimiter = ',')]
    grid: Vec<ClassWeights>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_SEEDS)]
    seeds: Vec<u64>,
    /// Cells trained concurrently [default: available cores].
    #[arg(long)]
    jobs: Option<usize>,
    /// One JSON line per (pair, seed).
    #[arg(long, default_value = "sweep.jsonl")]
    out: PathBuf,
    /// Also write the text table here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    flags: ModelFlags,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Records per location (per floor with --campus).
    #[arg(long, default_value_t = 600)]
    samples: usize,
    /// Shadowing noise in dB.
    #[arg(long, default_value_t = 6.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Three-building campus in UJIIndoorLoc layout instead of seven rooms.
    #[arg(long)]
    campus: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "WIFILOC_BIND", default_value = ServiceConfig::DEFAULT_BIND)]
    bind: SocketAddr,
    #[arg(long, env = "WIFILOC_MODEL")]
    model: Option<PathBuf>,
    #[arg(long, env = "WIFILOC_STORE", default_value = "fingerprints.csv")]
    store: PathBuf,
    /// Start without a model and only collect fingerprints.
    #[arg(long, env = "WIFILOC_COLLECTION_ONLY")]
    collection_only: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn read_dataset(path: &Path) -> CliResult<Dataset> {
    load_dataset(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Reads non-empty training data of the kind `mode` needs.
fn training_dataset(path: &Path, mode: ModelMode) -> CliResult<Dataset> {
    let ds = read_dataset(path)?;
    if ds.is_empty() {
        return Err(CliError::Usage(format!("{} has no records", path.display())));
    }
    if ds.kind() != mode.dataset_kind() {
        return Err(CliError::Usage(format!(
            "{mode} mode needs {:?} data but {} holds {:?} data",
            mode.dataset_kind(),
            path.display(),
            ds.kind()
        )));
    }
    Ok(ds)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn cmd_ingest(args: IngestArgs) -> CliResult {
    let ds = read_dataset(&args.path)?;
    let mut counts = std::collections::BTreeMap::new();
    for label in ds.labels() {
        *counts.entry(label.to_string()).or_insert(0usize) += 1;
    }
    let readings = ds.len() * ds.ap_order().len();
    let detected: usize = ds.records().iter().map(|r| r.rss.iter().flatten().count()).sum();
    println!("kind: {:?}", ds.kind());
    println!("records: {}", ds.len());
    println!("access points: {}", ds.ap_order().len());
    if readings > 0 {
        println!("detected readings: {:.2}%", 100.0 * detected as f64 / readings as f64);
    }
    println!("classes: {}", counts.len());
    for (label, n) in &counts {
        println!("  {label}: {n}");
    }
    if let Some(out) = args.out {
        match ds.kind() {
            DatasetKind::FloorLevel => write_store(&out, &ds)?,
            DatasetKind::BuildingFloor => {
                let mut w = create(&out)?;
                write_ujiindoorloc(&ds, &mut w)?;
                w.flush()?;
            }
        }
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn print_metrics(prefix: &str, m: &MetricsReport) {
    match (m.building_accuracy, m.floor_accuracy) {
        (Some(b), Some(f)) => println!(
            "{prefix}overall {} building {} floor {} ({} samples)",
            format_sci(m.overall_accuracy),
            format_sci(b),
            format_sci(f),
            m.sample_count
        ),
        _ => println!(
            "{prefix}accuracy {} ({} samples)",
            format_sci(m.overall_accuracy),
            m.sample_count
        ),
    }
}

fn history_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.history.jsonl"))
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let cfg = args.flags.config(args.mode)?;
    let ds = training_dataset(&args.data, args.mode)?;
    cfg.validate(args.mode, ds.ap_order().len())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let model = train_model(args.mode, &ds, &cfg)?;
    save_model(&model, &args.out)?;
    let history = args.history.unwrap_or_else(|| history_path(&args.out));
    let mut w = create(&history)?;
    for e in &model.history.epochs {
        serde_json::to_writer(&mut w, e).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(w)?;
    }
    w.flush()?;
    println!("model {} written to {}", model.model_version()?, args.out.display());
    println!("history written to {}", history.display());
    let (_, val) = validation_split(&ds, &cfg)?;
    if !val.is_empty() {
        print_metrics("validation: ", &evaluate_model(&model, &val)?);
    }
    Ok(())
}

fn dataset_for(model: &TrainedModel, ds: &Dataset, align: bool) -> CliResult<Dataset> {
    match ap_mismatch(model, ds) {
        None => Ok(ds.clone()),
        Some(msg) if align => {
            let (aligned, missing) = ds.aligned_to(&model.ap_order);
            eprintln!("{msg}; aligned, {missing} model APs treated as not detected");
            Ok(aligned)
        }
        Some(msg) => Err(CliError::Runtime(format!("{msg} (pass --align to re-map)"))),
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult {
    let ds = read_dataset(&args.data)?;
    if ds.is_empty() {
        return Err(CliError::Usage(format!("{} has no records", args.data.display())));
    }
    let mut reports = Vec::new();
    for path in &args.models {
        let model = load_model(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let mut data = dataset_for(&model, &ds, args.align)?;
        if args.validation_split {
            data = validation_split(&data, &model.config)?.1;
        }
        let report = evaluate_model(&model, &data)?;
        print_metrics(&format!("{}: ", path.display()), &report);
        reports.push(report);
    }
    if reports.len() > 1 {
        let stat =
            |f: &dyn Fn(&MetricsReport) -> Option<f64>| MeanSd::of(&reports.iter().filter_map(f).collect::<Vec<_>>());
        let show = |name: &str, s: Option<MeanSd>| {
            if let Some(s) = s {
                println!("{name}: {} ± {}", format_sci(s.mean), format_sci(s.sd));
            }
        };
        println!("mean over {} models", reports.len());
        show("overall", stat(&|r| Some(r.overall_accuracy)));
        show("building", stat(&|r| r.building_accuracy));
        show("floor", stat(&|r| r.floor_accuracy));
    }
    if let Some(path) = args.report {
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &reports).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CliResult {
    let cfg = args.flags.config(ModelMode::Hierarchical)?;
    let ds = training_dataset(&args.data, ModelMode::Hierarchical)?;
    cfg.validate(ModelMode::Hierarchical, ds.ap_order().len())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let test = match &args.test {
        Some(p) => {
            let t = read_dataset(p)?;
            Some(if t.ap_order() == ds.ap_order() {
                t
            } else {
                t.aligned_to(ds.ap_order()).0
            })
        }
        None => None,
    };
    let grid = if args.grid.is_empty() {
        default_weight_pairs()
    } else {
        args.grid
    };
    if args.seeds.is_empty() {
        return Err(CliError::Usage("--seeds needs at least one seed".into()));
    }
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = sweep_class_weights(&ds, test.as_ref(), &cfg, &grid, &args.seeds, jobs)?;
    let mut w = create(&args.out)?;
    write_sweep_jsonl(&result, &mut w)?;
    let table = render_report(&result);
    print!("{table}");
    if let Some(path) = args.report {
        std::fs::write(&path, &table)?;
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    if args.campus {
        let ds = generate_synthetic_campus_dataset(&SyntheticCampusConfig::three_buildings(
            args.samples,
            args.sigma,
            args.seed,
        ))
        .map_err(|e| CliError::Usage(e.to_string()))?;
        let mut w = create(&args.out)?;
        write_ujiindoorloc(&ds, &mut w)?;
        w.flush()?;
        println!("wrote {} records to {}", ds.len(), args.out.display());
    } else {
        let ds =
            generate_synthetic_floor_dataset(&SyntheticFloorConfig::seven_rooms(args.samples, args.sigma, args.seed))
                .map_err(|e| CliError::Usage(e.to_string()))?;
        write_store(&args.out, &ds)?;
        println!("wrote {} records to {}", ds.len(), args.out.display());
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> CliResult {
    let cfg = ServiceConfig {
        bind: args.bind,
        model_path: args.model,
        store_path: args.store,
        collection_only: args.collection_only,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("listening on {}", cfg.bind);
    runtime
        .block_on(wifiloc_service::serve(cfg))
        .map_err(|e| CliError::Runtime(e.to_string()))
}
