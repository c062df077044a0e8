//! `evoxel`: simulate, represent, train, evaluate and export.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use evoxel::config::{Preset, RunConfig};
use evoxel::evaluation::{
    binarize, evaluate_predictions, predict_split, EvalReport, FAggregation, Objective, Prediction, ThresholdSweepConfig,
};
use evoxel::export::{write_obj, write_ply, write_png};
use evoxel::io::{
    read_events, read_logits, read_voxel_record, read_voxels, scan_dataset, write_events, write_frame_stack, write_logits,
    write_voxel_record, write_voxels, EventFormat, Split, VoxelRecord,
};
use evoxel::neural::{Checkpoint, Tensor4};
use evoxel::pipeline::{build_dataset, continue_training, train};
use evoxel::representation::{AugmentOp, RepresentationConfig, SobelNormalization};
use evoxel::synth::{generate_object, simulate_scan, ScanConfig, ShapeFamily};
use evoxel::FrameMode;

#[derive(Parser)]
#[command(name = "evoxel", version, about = "Voxel reconstruction from event-camera scans")]
struct Cli {
    /// Worker threads (1 forces fully serial execution)
    #[arg(long, global = true, env = "EVOXEL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic object and its event scan, or a whole dataset tree
    Simulate(SimulateArgs),
    /// Convert an event file between the text and binary formats
    Convert(ConvertArgs),
    /// Turn an event file into a network-ready frame stack
    Represent(RepresentArgs),
    /// Train a network on a dataset tree
    Train(TrainArgs),
    /// Predict voxel logits with a trained checkpoint
    Infer(InferArgs),
    /// Predict the test split and sweep the binarization threshold
    Eval(EvalArgs),
    /// Sweep the threshold over stored logits
    Sweep(SweepArgs),
    /// Render a binarized prediction as PLY, OBJ or PNG
    Export(ExportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Run configuration (JSON or TOML); supplies dataset and scan settings
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Voxel resolution D
    #[arg(long)]
    resolution: Option<usize>,
    /// Shape family of a single object
    #[arg(long, default_value = "box")]
    family: String,
    /// Output directory
    #[arg(long)]
    out_dir: PathBuf,
    /// Build a dataset tree with this many objects per category
    #[arg(long)]
    count: Option<usize>,
    /// Train,val,test fractions for --count
    #[arg(long, value_delimiter = ',', num_args = 3)]
    split_ratios: Option<Vec<f64>>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Input event file (.evt or .evb)
    #[arg(long = "in")]
    input: PathBuf,
    /// Output event file (.evt or .evb)
    #[arg(long = "out")]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SobelNorm {
    PerPlane,
    Global,
}

#[derive(Args)]
struct RepresentArgs {
    /// Input event file
    #[arg(long = "in")]
    input: PathBuf,
    /// Output frame stack file
    #[arg(long = "out")]
    output: PathBuf,
    /// Event Frame mode
    #[arg(long, default_value = "pos")]
    mode: String,
    /// Apply the Sobel edge operator to every plane
    #[arg(long)]
    sobel: bool,
    /// Sobel normalisation scope
    #[arg(long, value_enum, default_value = "per-plane")]
    sobel_norm: SobelNorm,
    /// Time window length in seconds
    #[arg(long, default_value_t = 5e-3)]
    window: f64,
    /// Square output plane size (defaults to the sensor height)
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (JSON or TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset used when no config is given
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Dataset root
    #[arg(long)]
    data: PathBuf,
    /// Total epochs to reach (overrides the config)
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint output directory
    #[arg(long)]
    out: PathBuf,
    /// Continue from this checkpoint directory
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Log every N epochs
    #[arg(long, default_value_t = 1)]
    log_every: usize,
}

#[derive(Args)]
struct InferArgs {
    /// Checkpoint directory
    #[arg(long)]
    checkpoint: PathBuf,
    /// Single event file to predict
    #[arg(long = "in", conflicts_with = "data")]
    input: Option<PathBuf>,
    /// Dataset root; predicts every sample of --split
    #[arg(long)]
    data: Option<PathBuf>,
    /// Split predicted with --data
    #[arg(long, default_value = "test")]
    split: String,
    /// Output logits file (with --in) or directory (with --data)
    #[arg(long = "out")]
    output: PathBuf,
    /// Also write the grid binarized at this probability (with --in)
    #[arg(long, requires = "input")]
    threshold: Option<f64>,
}

#[derive(Args)]
struct SweepOptions {
    /// Threshold range min:max:step
    #[arg(long, default_value = "0.15:0.50:0.01")]
    sweep: String,
    /// Selection objective
    #[arg(long, default_value = "miou")]
    objective: String,
    /// F-Score aggregation (macro or micro)
    #[arg(long, default_value = "macro")]
    f_aggregation: String,
    /// Report output (JSON)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset root
    #[arg(long)]
    data: PathBuf,
    /// Split to evaluate
    #[arg(long, default_value = "test")]
    split: String,
    #[command(flatten)]
    sweep: SweepOptions,
}

#[derive(Args)]
struct SweepArgs {
    /// Directory of logits files written by `infer --data`
    #[arg(long)]
    predictions: PathBuf,
    /// Dataset root providing the labels
    #[arg(long)]
    data: PathBuf,
    /// Split the predictions belong to
    #[arg(long, default_value = "test")]
    split: String,
    #[command(flatten)]
    sweep: SweepOptions,
}

#[derive(Args)]
struct ExportArgs {
    /// Logits file to binarize
    #[arg(long, conflicts_with = "voxels", required_unless_present = "voxels")]
    logits: Option<PathBuf>,
    /// Already binarized voxel grid (.vox.json)
    #[arg(long)]
    voxels: Option<PathBuf>,
    /// Binarization threshold for --logits
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
    /// Ground-truth grid (.vox.json) for correct/incorrect colouring
    #[arg(long)]
    label: Option<PathBuf>,
    /// Write a PLY mesh
    #[arg(long)]
    ply: Option<PathBuf>,
    /// Write an OBJ mesh
    #[arg(long)]
    obj: Option<PathBuf>,
    /// Write a PNG rendering
    #[arg(long)]
    png: Option<PathBuf>,
    /// PNG side in pixels
    #[arg(long, default_value_t = 512)]
    png_size: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
        info!("threads: {n}");
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Convert(a) => convert(a),
        Command::Represent(a) => represent(a),
        Command::Train(a) => train_cmd(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Export(a) => export(a),
    }
}

fn load_config(path: Option<&Path>, preset: Preset, seed: Option<u64>) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => {
            let Some(seed) = seed else {
                bail!("a seed is required: pass --seed or a config file");
            };
            RunConfig::preset(preset, seed)
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn log_config(config: &RunConfig) {
    info!("seed: {}", config.seed);
    info!("resolved config: {}", serde_json::to_string(config).expect("configuration serialises"));
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut config = load_config(a.config.as_deref(), Preset::Desk, a.seed)?;
    if let Some(d) = a.resolution {
        config.dataset.resolution = d;
    }
    if let Some(r) = &a.split_ratios {
        config.dataset.split_ratios = [r[0], r[1], r[2]];
    }
    if let Some(n) = a.count {
        config.dataset.per_category = n;
    }
    log_config(&config);
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;

    if a.count.is_some() {
        let manifest = build_dataset(&a.out_dir, &config.dataset, config.seed).context("simulate")?;
        info!(
            "wrote {} pairs (train {}, val {}, test {})",
            manifest.len(),
            manifest.count(Split::Train),
            manifest.count(Split::Val),
            manifest.count(Split::Test)
        );
        return Ok(());
    }

    let family: ShapeFamily = a.family.parse()?;
    info!("family: {family}");
    let object = generate_object(config.seed, config.dataset.resolution, family).context("simulate")?;
    let stream = simulate_scan(&ScanConfig {
        seed: config.seed,
        object: object.clone(),
        settings: config.dataset.scan.clone(),
    })
    .context("simulate")?;
    let stem = a.out_dir.join(format!("{family}_{}", config.seed));
    write_events(&stream, stem.with_extension("evb"), EventFormat::Binary)?;
    write_voxel_record(
        &VoxelRecord {
            grid: object,
            category: None,
            object_id: Some(format!("{family}_{}", config.seed)),
        },
        &stem,
    )?;
    info!("wrote {} events to {}.evb", stream.len(), stem.display());
    Ok(())
}

fn convert(a: ConvertArgs) -> Result<()> {
    info!("convert {} -> {}", a.input.display(), a.output.display());
    let format = EventFormat::from_path(&a.output)?;
    let stream = read_events(&a.input).context("convert")?;
    write_events(&stream, &a.output, format).context("convert")?;
    info!("converted {} events", stream.len());
    Ok(())
}

fn represent(a: RepresentArgs) -> Result<()> {
    let stream = read_events(&a.input).context("represent")?;
    let config = RepresentationConfig {
        mode: a.mode.parse::<FrameMode>()?,
        window_length: a.window,
        sobel: a.sobel,
        sobel_normalization: match a.sobel_norm {
            SobelNorm::PerPlane => SobelNormalization::PerPlane,
            SobelNorm::Global => SobelNormalization::Global,
        },
        target_size: a.size.unwrap_or(stream.height() as usize),
        augment: Vec::<AugmentOp>::new(),
    };
    info!("representation: {}", serde_json::to_string(&config)?);
    let frames = config.represent::<f32>(&stream).context("represent")?;
    write_frame_stack(&frames, &a.output)?;
    info!("wrote {} planes of {}x{}", frames.planes(), frames.height(), frames.width());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let manifest = scan_dataset(&a.data).with_context(|| format!("scanning {}", a.data.display()))?;
    let checkpoint = match &a.resume {
        Some(dir) => {
            let resumed = Checkpoint::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
            let mut trainer = resumed.trainer::<f32>()?;
            if a.seed.is_some_and(|s| s != trainer.seed) {
                bail!("--seed {} differs from the checkpoint seed {}", a.seed.unwrap(), trainer.seed);
            }
            let epochs = a.epochs.unwrap_or(trainer.training.epochs);
            info!("seed: {}", trainer.seed);
            info!("resuming at epoch {} of {epochs}", trainer.epoch);
            continue_training(&mut trainer, &manifest, epochs, a.log_every).context("train")?
        }
        None => {
            let mut config = load_config(a.config.as_deref(), a.preset.parse()?, a.seed)?;
            if let Some(e) = a.epochs {
                config.training.epochs = e;
            }
            config.validate()?;
            log_config(&config);
            train(&manifest, &config, a.log_every).context("train")?
        }
    };
    checkpoint.save(&a.out).with_context(|| format!("saving checkpoint {}", a.out.display()))?;
    if let Some(last) = checkpoint.meta.history.last() {
        info!("epoch {}: train loss {:.6}", last.epoch, last.train_loss);
    }
    info!("checkpoint written to {}", a.out.display());
    Ok(())
}

fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let checkpoint = Checkpoint::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
    info!("checkpoint seed: {}, epoch {}", checkpoint.meta.seed, checkpoint.meta.epoch);
    info!("representation: {}", serde_json::to_string(&checkpoint.meta.representation)?);
    Ok(checkpoint)
}

fn infer(a: InferArgs) -> Result<()> {
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    if let Some(data) = &a.data {
        let split: Split = a.split.parse()?;
        let manifest = scan_dataset(data)?;
        let predictions = predict_split(&checkpoint, &manifest, split).context("infer")?;
        fs::create_dir_all(&a.output)?;
        for p in &predictions {
            let path = a.output.join(format!("{}.logits", p.object_id));
            write_logits(&p.logits, Some(p.category.name()), Some(&p.object_id), path)?;
        }
        info!("wrote {} logits files to {}", predictions.len(), a.output.display());
        return Ok(());
    }
    let Some(input) = &a.input else {
        bail!("one of --in or --data is required");
    };
    let stream = read_events(input).context("infer")?;
    let mut network = checkpoint.network::<f32>()?;
    let frames = checkpoint.meta.representation.represent::<f32>(&stream).context("infer")?;
    let logits = network.predict(Tensor4::from_frames(&frames)).context("infer")?;
    // Binary event files carry no object id; fall back to the file name.
    let object_id = stream
        .object_id
        .clone()
        .or_else(|| input.file_stem().map(|s| s.to_string_lossy().into_owned()));
    write_logits(&logits, stream.category.as_deref(), object_id.as_deref(), &a.output)?;
    info!("wrote logits to {}", a.output.display());
    if let Some(p) = a.threshold {
        let grid = binarize(&logits, p);
        let stem = a.output.with_extension("");
        write_voxels(&grid, &stem)?;
        info!("wrote {} occupied voxels at p = {p} to {}.vox.json", grid.occupied_count(), stem.display());
    }
    Ok(())
}

fn sweep_config(o: &SweepOptions) -> Result<ThresholdSweepConfig> {
    let config = ThresholdSweepConfig {
        objective: o.objective.parse::<Objective>()?,
        f_aggregation: o.f_aggregation.parse::<FAggregation>()?,
        ..ThresholdSweepConfig::default()
    }
    .with_range(&o.sweep)?;
    info!("sweep: {}", serde_json::to_string(&config)?);
    Ok(config)
}

fn finish_report(report: &EvalReport, path: Option<&Path>) -> Result<()> {
    println!(
        "best threshold {:.2}: mIoU {:.4}, F-Score {:.4} over {} samples",
        report.best_threshold, report.best.miou, report.best.f_score, report.samples
    );
    for c in &report.best.per_category {
        println!("  {:<12} n={:<3} IoU {:.4}  F {:.4}", c.category.name(), c.samples, c.iou, c.f_score);
    }
    if let Some(path) = path {
        fs::write(path, report.to_json()?).with_context(|| format!("writing {}", path.display()))?;
        info!("report written to {}", path.display());
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let sweep = sweep_config(&a.sweep)?;
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    let manifest = scan_dataset(&a.data)?;
    let predictions = predict_split(&checkpoint, &manifest, a.split.parse()?).context("eval")?;
    let report = evaluate_predictions(&predictions, &sweep).context("eval")?;
    finish_report(&report, a.sweep.report.as_deref())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let sweep = sweep_config(&a.sweep)?;
    let manifest = scan_dataset(&a.data)?;
    let split: Split = a.split.parse()?;
    let predictions = manifest
        .split(split)
        .into_iter()
        .map(|entry| {
            let path = a.predictions.join(format!("{}.logits", entry.object_id));
            let (_, logits) = read_logits(&path).with_context(|| format!("reading {}", path.display()))?;
            Ok(Prediction {
                category: entry.category,
                object_id: entry.object_id.clone(),
                logits,
                label: read_voxel_record(&entry.voxels)?.grid,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate_predictions(&predictions, &sweep).context("sweep")?;
    finish_report(&report, a.sweep.report.as_deref())
}

fn export(a: ExportArgs) -> Result<()> {
    let pred = match (&a.logits, &a.voxels) {
        (Some(path), _) => {
            let (_, logits) = read_logits(path).with_context(|| format!("reading {}", path.display()))?;
            info!("binarizing {} at p = {}", path.display(), a.threshold);
            binarize(&logits, a.threshold)
        }
        (None, Some(path)) => read_voxels(path)?,
        (None, None) => bail!("one of --logits or --voxels is required"),
    };
    let label = a.label.as_ref().map(read_voxels).transpose()?;
    if a.ply.is_none() && a.obj.is_none() && a.png.is_none() {
        bail!("nothing to export: pass --ply, --obj or --png");
    }
    if let Some(path) = &a.ply {
        write_ply(&pred, label.as_ref(), path).context("export")?;
    }
    if let Some(path) = &a.obj {
        write_obj(&pred, label.as_ref(), path).context("export")?;
    }
    if let Some(path) = &a.png {
        write_png(&pred, label.as_ref(), a.png_size, path).context("export")?;
    }
    info!("exported {} occupied voxels", pred.occupied_count());
    Ok(())
}

