//! `snz` — command line for the sleep staging pipeline: generate synthetic
//! records, extract components, augment, train, infer and evaluate.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use snz_core::augment::{augment_record, spectral_signature};
use snz_core::bundle::{read_bundle, write_bundle, RecordBundle};
use snz_core::config::PipelineConfig;
use snz_core::dataset::{
    bundle_to_components, bundle_to_raw_record, components_to_bundle, raw_record_to_bundle,
    truth_to_bundle,
};
use snz_core::extract::{extract_components, SourceKind};
use snz_core::model::{
    build_model, load_checkpoint, predict, save_checkpoint, Mode, ModelConfig, Preset,
};
use snz_core::rng::derive_rng;
use snz_core::synth::{generate, SynthConfig};
use snz_core::train::{
    evaluate, hypnogram_csv, log_to_csv, train, LabeledRecord, Pooling, TrainConfig,
};

/// Exit codes, also listed in `--help`.
mod exit_code {
    pub const FORMAT: u8 = 3;
    pub const MISSING_INPUT: u8 = 4;
    pub const CONFIG: u8 = 5;
    pub const DATA: u8 = 6;
    pub const INTERNAL: u8 = 7;
}

const EXIT_HELP: &str = "exit codes:\n  \
    0  success\n  \
    2  command line usage error\n  \
    3  malformed or unreadable bundle/file\n  \
    4  missing input or channel\n  \
    5  configuration violation\n  \
    6  record too short / insufficient data\n  \
    7  internal numeric error";

#[derive(Parser)]
#[command(name = "snz", version, about = "Zero-shot sleep staging pipeline", after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline config file (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic record pairs (clean + degraded) with ground truth.
    Synth {
        #[command(flatten)]
        config: ConfigArg,
        /// Base seed; record i uses seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of record pairs.
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Record duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Raw sample rate in Hz.
        #[arg(long)]
        rate: Option<f64>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Extract the 4 Hz component set from raw record bundles.
    Extract {
        #[command(flatten)]
        config: ConfigArg,
        /// Raw record bundles.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory (component bundle per input).
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Source kind: auto, bed-sensor or respiratory-effort.
        #[arg(long, default_value = "auto")]
        source: String,
    },
    /// Apply the generalization module (amplify + speed perturbation).
    Augment {
        #[command(flatten)]
        config: ConfigArg,
        /// Component bundle with stage labels.
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Augmentation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also print the spectral signature length (diagnostic).
        #[arg(long, default_value_t = false)]
        signature: bool,
    },
    /// Train on component bundles and write the best checkpoint plus a CSV log.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Directory of training component bundles (*.snz with stages).
        #[arg(long)]
        train_dir: PathBuf,
        /// Directory of validation bundles; defaults to training data.
        #[arg(long)]
        val_dir: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Per-epoch CSV log path.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Model preset: default or tiny.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        steps_per_epoch: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        crop_epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Disable online augmentation.
        #[arg(long, default_value_t = false)]
        no_augment: bool,
    },
    /// Label a component bundle with a trained checkpoint; writes a hypnogram CSV.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Evaluate a checkpoint against labeled component bundles.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled component bundles (files or directories).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Metrics CSV output path.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Average metrics per record instead of pooling epochs.
        #[arg(long, default_value_t = false)]
        per_record: bool,
    },
    /// Print a bundle's header and check every type invariant.
    Inspect { input: PathBuf },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_config(arg: &ConfigArg) -> CliResult<PipelineConfig> {
    match &arg.config {
        None => Ok(PipelineConfig::default()),
        Some(path) => PipelineConfig::from_path(path)
            .map_err(|e| CliError::new(exit_code::CONFIG, format!("config: {e}"))),
    }
}

fn read_bundle_cli(path: &Path) -> CliResult<RecordBundle> {
    if !path.exists() {
        return Err(CliError::new(
            exit_code::MISSING_INPUT,
            format!("input not found: {}", path.display()),
        ));
    }
    read_bundle(path)
        .map_err(|e| CliError::new(exit_code::FORMAT, format!("{}: {e}", path.display())))
}

fn write_bundle_cli(bundle: &RecordBundle, path: &Path) -> CliResult<()> {
    write_bundle(bundle, path)
        .map_err(|e| CliError::new(exit_code::FORMAT, format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| {
                CliError::new(exit_code::FORMAT, format!("{}: {e}", dir.display()))
            })?;
        }
    }
    fs::write(path, text)
        .map_err(|e| CliError::new(exit_code::FORMAT, format!("{}: {e}", path.display())))
}

/// Collects .snz files from files-or-directories, sorted by name.
fn collect_bundles(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = fs::read_dir(input).map_err(|e| {
                CliError::new(exit_code::MISSING_INPUT, format!("{}: {e}", input.display()))
            })?;
            for entry in entries {
                let path = entry
                    .map_err(|e| CliError::new(exit_code::MISSING_INPUT, e.to_string()))?
                    .path();
                if path.extension().is_some_and(|e| e == "snz") {
                    files.push(path);
                }
            }
        } else if input.exists() {
            files.push(input.clone());
        } else {
            return Err(CliError::new(
                exit_code::MISSING_INPUT,
                format!("input not found: {}", input.display()),
            ));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::new(exit_code::MISSING_INPUT, "no .snz bundles found"));
    }
    Ok(files)
}

fn load_labeled_records(paths: &[PathBuf]) -> CliResult<Vec<LabeledRecord<f32>>> {
    let mut records = Vec::with_capacity(paths.len());
    for path in paths {
        let bundle = read_bundle_cli(path)?;
        let (components, stages) = bundle_to_components::<f32>(&bundle)
            .map_err(|e| CliError::new(exit_code::FORMAT, format!("{}: {e}", path.display())))?;
        let stages = stages.ok_or_else(|| {
            CliError::new(
                exit_code::DATA,
                format!("{}: bundle has no stage labels", path.display()),
            )
        })?;
        records.push((components, stages));
    }
    Ok(records)
}

fn cmd_synth(
    config: &ConfigArg,
    seed: u64,
    count: u64,
    duration: Option<f64>,
    rate: Option<f64>,
    out_dir: &Path,
) -> CliResult<()> {
    let pipeline = load_config(config)?;
    for i in 0..count {
        let mut synth_cfg: SynthConfig = pipeline.synth.to_synth_config();
        synth_cfg.seed = seed + i;
        if let Some(d) = duration {
            synth_cfg.duration_s = d;
        }
        if let Some(r) = rate {
            synth_cfg.raw_rate_hz = r;
        }
        let out =
            generate(&synth_cfg).map_err(|e| CliError::new(exit_code::CONFIG, e.to_string()))?;
        let base = format!("synth-{:08}", seed + i);
        write_bundle_cli(
            &raw_record_to_bundle(&out.clean),
            &out_dir.join(format!("{base}-clean.snz")),
        )?;
        write_bundle_cli(
            &raw_record_to_bundle(&out.degraded),
            &out_dir.join(format!("{base}-degraded.snz")),
        )?;
        write_bundle_cli(
            &truth_to_bundle(&format!("{base}-truth"), &out.truth),
            &out_dir.join(format!("{base}-truth.snz")),
        )?;
        println!(
            "{base}: {} epochs, {} beats, {} movement intervals",
            out.truth.stages.len(),
            out.truth.beat_times_s.len(),
            out.truth.movement_intervals.len()
        );
    }
    Ok(())
}

fn cmd_extract(
    config: &ConfigArg,
    inputs: &[PathBuf],
    out_dir: &Path,
    source: &str,
) -> CliResult<()> {
    let pipeline = load_config(config)?;
    let extract_cfg = pipeline.extract.to_extract_config();
    for input in collect_bundles(inputs)? {
        let bundle = read_bundle_cli(&input)?;
        let record = bundle_to_raw_record::<f64>(&bundle)
            .map_err(|e| CliError::new(exit_code::FORMAT, format!("{}: {e}", input.display())))?;
        let kind = match source {
            "auto" => record.infer_source().ok_or_else(|| {
                CliError::new(
                    exit_code::MISSING_INPUT,
                    format!(
                        "{}: cannot infer source (need channel 'raw' or 'cardiac'+'resp')",
                        input.display()
                    ),
                )
            })?,
            other => SourceKind::parse(other).ok_or_else(|| {
                CliError::new(exit_code::CONFIG, format!("unknown source kind '{other}'"))
            })?,
        };
        let extraction = extract_components(&record, kind, &extract_cfg).map_err(|e| {
            let code = match &e {
                snz_core::signal::SignalError::InvalidInput(_) => exit_code::MISSING_INPUT,
                snz_core::signal::SignalError::TooShort(_)
                | snz_core::signal::SignalError::InsufficientBeats(_)
                | snz_core::signal::SignalError::EmptyAfterCleaning => exit_code::DATA,
                _ => exit_code::INTERNAL,
            };
            CliError::new(code, format!("{}: {e}", input.display()))
        })?;
        for warning in &extraction.warnings {
            eprintln!("warning: {warning}");
        }
        let stem = input.file_stem().unwrap_or_default().to_string_lossy();
        let out_path = out_dir.join(format!("{stem}-components.snz"));
        let out_bundle = components_to_bundle(
            &format!("{}-components", record.id),
            &extraction.components,
            extraction.stages.as_ref(),
        );
        write_bundle_cli(&out_bundle, &out_path)?;
        println!(
            "{} -> {} ({} epochs, source {})",
            input.display(),
            out_path.display(),
            extraction.components.epochs(),
            kind.as_str()
        );
    }
    Ok(())
}

fn cmd_augment(
    config: &ConfigArg,
    input: &Path,
    output: &Path,
    seed: Option<u64>,
    signature: bool,
) -> CliResult<()> {
    let pipeline = load_config(config)?;
    let mut aug_cfg = pipeline.augment.to_augment_config();
    if let Some(s) = seed {
        aug_cfg.rng_seed = s;
    }
    aug_cfg.validate().map_err(|e| CliError::new(exit_code::CONFIG, e.to_string()))?;
    let bundle = read_bundle_cli(input)?;
    let (components, stages) = bundle_to_components::<f64>(&bundle)
        .map_err(|e| CliError::new(exit_code::FORMAT, format!("{}: {e}", input.display())))?;
    let stages = stages.ok_or_else(|| {
        CliError::new(exit_code::DATA, "augmentation needs stage labels in the bundle")
    })?;
    let mut rng = derive_rng(aug_cfg.rng_seed, 0);
    let (aug_components, aug_stages) = augment_record(&components, &stages, &aug_cfg, &mut rng)
        .map_err(|e| CliError::new(exit_code::DATA, e.to_string()))?;
    if signature {
        let sig = spectral_signature(&aug_components)
            .map_err(|e| CliError::new(exit_code::DATA, e.to_string()))?;
        println!("spectral signature: {} bins", sig.len());
    }
    let out_bundle = components_to_bundle(
        &format!("{}-augmented", bundle.record_id),
        &aug_components,
        Some(&aug_stages),
    );
    write_bundle_cli(&out_bundle, output)?;
    println!(
        "{} -> {} ({} -> {} epochs)",
        input.display(),
        output.display(),
        stages.len(),
        aug_stages.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config: &ConfigArg,
    train_dir: &Path,
    val_dir: Option<&Path>,
    checkpoint: &Path,
    log: Option<&Path>,
    preset: Option<&str>,
    epochs: Option<usize>,
    steps_per_epoch: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    crop_epochs: Option<usize>,
    seed: Option<u64>,
    no_augment: bool,
) -> CliResult<()> {
    let pipeline = load_config(config)?;
    let mut train_cfg: TrainConfig = pipeline.train.to_train_config();
    if let Some(v) = epochs {
        train_cfg.epochs = v;
    }
    if let Some(v) = steps_per_epoch {
        train_cfg.steps_per_epoch = v;
    }
    if let Some(v) = batch_size {
        train_cfg.batch_size = v;
    }
    if let Some(v) = lr {
        train_cfg.lr = v;
    }
    if let Some(v) = crop_epochs {
        train_cfg.crop_epochs = v;
    }
    if let Some(v) = seed {
        train_cfg.seed = v;
    }
    if no_augment {
        train_cfg.augment = false;
    }
    let preset = match preset {
        Some(name) => Preset::parse(name).ok_or_else(|| {
            CliError::new(exit_code::CONFIG, format!("unknown preset '{name}'"))
        })?,
        None => pipeline
            .model
            .preset()
            .map_err(|e| CliError::new(exit_code::CONFIG, e.to_string()))?,
    };
    let aug_cfg = pipeline.augment.to_augment_config();

    let train_records = load_labeled_records(&collect_bundles(&[train_dir.to_path_buf()])?)?;
    let val_records = match val_dir {
        Some(dir) => load_labeled_records(&collect_bundles(&[dir.to_path_buf()])?)?,
        None => train_records.clone(),
    };

    let (model, mut store) =
        build_model::<f32>(ModelConfig::preset(preset), pipeline.model.init_seed)
            .map_err(|e| CliError::new(exit_code::CONFIG, e.to_string()))?;
    let outcome = train(&model, &mut store, &train_records, &val_records, &train_cfg, &aug_cfg)
        .map_err(|e| {
            let code = match &e {
                snz_core::train::TrainError::NoData(_) => exit_code::DATA,
                _ => exit_code::INTERNAL,
            };
            CliError::new(code, e.to_string())
        })?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    outcome.best.restore(&mut store);
    save_checkpoint(&store, preset, checkpoint)
        .map_err(|e| CliError::new(exit_code::FORMAT, e.to_string()))?;
    if let Some(log_path) = log {
        write_text(log_path, &log_to_csv(&outcome.log))?;
    }
    println!(
        "trained {} steps; best validation kappa {:.4}; checkpoint {}",
        train_cfg.epochs * train_cfg.steps_per_epoch,
        outcome.best_kappa,
        checkpoint.display()
    );
    Ok(())
}

type LoadedModel = (snz_core::model::SleepStager, snz_core::tensor::ParamStore<f32>);

fn load_model(checkpoint: &Path) -> CliResult<LoadedModel> {
    if !checkpoint.exists() {
        return Err(CliError::new(
            exit_code::MISSING_INPUT,
            format!("checkpoint not found: {}", checkpoint.display()),
        ));
    }
    load_checkpoint::<f32>(checkpoint)
        .map_err(|e| CliError::new(exit_code::FORMAT, format!("{}: {e}", checkpoint.display())))
}

fn cmd_infer(checkpoint: &Path, input: &Path, output: &Path) -> CliResult<()> {
    let (model, store) = load_model(checkpoint)?;
    let bundle = read_bundle_cli(input)?;
    let (components, _) = bundle_to_components::<f32>(&bundle)
        .map_err(|e| CliError::new(exit_code::FORMAT, format!("{}: {e}", input.display())))?;
    let probabilities = snz_core::tensor::no_grad(|| {
        model.forward(&store, &components, &mut Mode::Eval)
    })
    .map_err(|e| CliError::new(exit_code::INTERNAL, e.to_string()))?;
    let stages = predict(&probabilities);
    write_text(output, &hypnogram_csv(&stages))?;
    println!("{} epochs -> {}", stages.len(), output.display());
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    inputs: &[PathBuf],
    metrics_path: Option<&Path>,
    per_record: bool,
) -> CliResult<()> {
    let (model, store) = load_model(checkpoint)?;
    let records = load_labeled_records(&collect_bundles(inputs)?)?;
    let pooling = if per_record { Pooling::PerRecord } else { Pooling::Pooled };
    let report = evaluate(&model, &store, &records, pooling)
        .map_err(|e| CliError::new(exit_code::INTERNAL, e.to_string()))?;
    print!("{}", report.pretty());
    if let Some(path) = metrics_path {
        write_text(path, &report.to_csv())?;
        println!("metrics -> {}", path.display());
    }
    Ok(())
}

fn inspect_components(bundle: &RecordBundle) -> Vec<String> {
    let mut findings = Vec::new();
    match bundle_to_components::<f64>(bundle) {
        Ok((components, stages)) => {
            findings.push(format!(
                "component set: OK ({} epochs at {} Hz, length multiple of 120)",
                components.epochs(),
                components.heartbeat.sample_rate_hz
            ));
            if let Some(stages) = stages {
                if stages.len() == components.epochs() {
                    findings.push(format!("stages: OK ({} labels match epochs)", stages.len()));
                } else {
                    findings.push(format!(
                        "stages: MISMATCH ({} labels vs {} epochs)",
                        stages.len(),
                        components.epochs()
                    ));
                }
            }
        }
        Err(e) => findings.push(format!("component invariants: not a component bundle ({e})")),
    }
    findings
}

fn cmd_inspect(input: &Path) -> CliResult<()> {
    let bundle = read_bundle_cli(input)?;
    println!("record_id: {}", bundle.record_id);
    for c in &bundle.channels {
        let finite = c.samples.iter().all(|v| v.is_finite());
        let duration = if c.sample_rate_hz > 0.0 {
            format!("{:.1} s", c.samples.len() as f64 / c.sample_rate_hz)
        } else {
            "-".to_string()
        };
        println!(
            "channel {:<22} rate {:>8} Hz  samples {:>9}  duration {:>10}  shape {:?}  finite {}",
            c.name, c.sample_rate_hz, c.samples.len(), duration, c.shape, finite
        );
    }
    match &bundle.stages {
        Some(s) => {
            let valid = s.codes.iter().all(|&c| c <= 4);
            println!("stages: {} epochs of {} s, codes valid: {valid}", s.codes.len(), s.epoch_s);
        }
        None => println!("stages: none"),
    }
    for finding in inspect_components(&bundle) {
        println!("{finding}");
    }
    Ok(())
}

fn run() -> CliResult<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth { config, seed, count, duration, rate, out_dir } => {
            cmd_synth(config, *seed, *count, *duration, *rate, out_dir)
        }
        Command::Extract { config, inputs, out_dir, source } => {
            cmd_extract(config, inputs, out_dir, source)
        }
        Command::Augment { config, input, output, seed, signature } => {
            cmd_augment(config, input, output, *seed, *signature)
        }
        Command::Train {
            config,
            train_dir,
            val_dir,
            checkpoint,
            log,
            preset,
            epochs,
            steps_per_epoch,
            batch_size,
            lr,
            crop_epochs,
            seed,
            no_augment,
        } => cmd_train(
            config,
            train_dir,
            val_dir.as_deref(),
            checkpoint,
            log.as_deref(),
            preset.as_deref(),
            *epochs,
            *steps_per_epoch,
            *batch_size,
            *lr,
            *crop_epochs,
            *seed,
            *no_augment,
        ),
        Command::Infer { checkpoint, input, output } => cmd_infer(checkpoint, input, output),
        Command::Eval { checkpoint, inputs, metrics, per_record } => {
            cmd_eval(checkpoint, inputs, metrics.as_deref(), *per_record)
        }
        Command::Inspect { input } => cmd_inspect(input),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
