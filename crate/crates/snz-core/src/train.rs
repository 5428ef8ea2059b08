//! Training loop (random crops, online augmentation, AdamW) and whole-record
//! evaluation with pooled metrics.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::augment::{augment_record, AugmentConfig};
use crate::metrics::{confusion_counts, MetricsError, MetricsReport};
use crate::model::{cross_entropy, predict, Mode, ModelError, SleepStager};
use crate::num::Scalar;
use crate::rng::derive_rng;
use crate::signal::{
    BinaryMask, ComponentSet, SignalError, StageSequence, Waveform, SAMPLES_PER_EPOCH,
};
use crate::tensor::{adamw_step, AdamWConfig, AdamWState, ParamStore, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no usable training data: {0}")]
    NoData(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Training hyperparameters. The defaults mirror the published configuration;
/// desk-scale experiments shrink the step counts and crop length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub crop_epochs: usize,
    pub seed: u64,
    /// Online augmentation (amplify + speed perturbation) on the training
    /// crops; switched off for ablation runs.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            steps_per_epoch: 300,
            batch_size: 32,
            lr: 1.1e-4,
            weight_decay: 1e-5,
            crop_epochs: 120,
            seed: 0,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 {
            return Err(TrainError::NoData("epochs, steps and batch size must be positive".into()));
        }
        if self.crop_epochs < 2 {
            return Err(TrainError::NoData("crop_epochs must be at least 2".into()));
        }
        Ok(())
    }
}

/// One labeled record.
pub type LabeledRecord<S> = (ComponentSet<S>, StageSequence);

/// Per-training-epoch log line.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub step: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_kappa: f64,
    pub val_mf1: f64,
    pub val_wf1: f64,
}

/// Serializes the log as the pipeline's CSV format.
pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("step,loss,val_acc,val_kappa,val_mf1,val_wf1\n");
    for l in log {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            l.step, l.train_loss, l.val_acc, l.val_kappa, l.val_mf1, l.val_wf1
        ));
    }
    out
}

/// Per-epoch stage codes as CSV.
pub fn hypnogram_csv(stages: &StageSequence) -> String {
    let mut out = String::from("epoch,stage_code,stage\n");
    for (i, s) in stages.stages.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i, s.code(), s.name()));
    }
    out
}

/// Copy of all parameter and buffer values, used for best-checkpoint
/// retention.
pub struct ParamSnapshot<S: Scalar> {
    params: Vec<Vec<S>>,
    buffers: Vec<Vec<S>>,
}

impl<S: Scalar> ParamSnapshot<S> {
    pub fn capture(store: &ParamStore<S>) -> Self {
        Self {
            params: store.iter().map(|(_, t, _)| t.data().to_vec()).collect(),
            buffers: store.buffer_iter().map(|(_, v)| v).collect(),
        }
    }

    pub fn restore(&self, store: &mut ParamStore<S>) {
        let ids: Vec<_> = (0..store.len()).collect();
        for (i, data) in ids.into_iter().zip(&self.params) {
            store.set_data(crate::tensor::ParamId(i), data.clone());
        }
        let buffer_names: Vec<String> =
            store.buffer_iter().map(|(n, _)| n.to_string()).collect();
        for (name, values) in buffer_names.iter().zip(&self.buffers) {
            let id = store.find_buffer(name).expect("buffer still registered");
            store.set_buffer(id, values.clone());
        }
    }
}

/// Training outcome: the per-epoch log plus the best-validation-kappa
/// parameter snapshot (final parameters when no validation set is given).
pub struct TrainOutcome<S: Scalar> {
    pub log: Vec<EpochLog>,
    pub best_kappa: f64,
    pub best: ParamSnapshot<S>,
    pub warnings: Vec<String>,
}

fn crop_record<S: Scalar>(
    record: &LabeledRecord<S>,
    start_epoch: usize,
    crop_epochs: usize,
) -> LabeledRecord<S> {
    let (c, y) = record;
    let lo = start_epoch * SAMPLES_PER_EPOCH;
    let hi = (start_epoch + crop_epochs) * SAMPLES_PER_EPOCH;
    let slice_wave = |w: &Waveform<S>| {
        Waveform::new(w.samples[lo..hi].to_vec(), w.sample_rate_hz, w.label.clone())
    };
    let components = ComponentSet {
        heartbeat: slice_wave(&c.heartbeat),
        breath: slice_wave(&c.breath),
        movement: BinaryMask::new(c.movement.values[lo..hi].to_vec(), c.movement.sample_rate_hz()),
    };
    let stages =
        StageSequence::new(y.stages[start_epoch..start_epoch + crop_epochs].to_vec());
    (components, stages)
}

/// Runs the training loop. Each step samples `batch_size` random crops of
/// `crop_epochs` contiguous epochs, optionally augments them, takes the mean
/// of the per-crop summed cross-entropies, and applies one AdamW update.
/// Validation metrics are logged at the end of every training epoch and the
/// best-kappa snapshot is retained. Deterministic for a fixed seed.
pub fn train<S: Scalar>(
    model: &SleepStager,
    store: &mut ParamStore<S>,
    train_set: &[LabeledRecord<S>],
    val_set: &[LabeledRecord<S>],
    cfg: &TrainConfig,
    aug: &AugmentConfig,
) -> Result<TrainOutcome<S>, TrainError> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let usable: Vec<&LabeledRecord<S>> = train_set
        .iter()
        .filter(|(c, y)| {
            let ok = c.epochs() >= cfg.crop_epochs && y.len() == c.epochs();
            if !ok {
                warnings.push(format!(
                    "skipping record with {} epochs (< crop {} or label mismatch)",
                    c.epochs(),
                    cfg.crop_epochs
                ));
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Err(TrainError::NoData(format!(
            "no record reaches crop_epochs = {}",
            cfg.crop_epochs
        )));
    }

    let optim_cfg = AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };
    let mut optim_state = AdamWState::new(store);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best_kappa = f64::NEG_INFINITY;
    let mut best = ParamSnapshot::capture(store);
    let mut epoch_loss_acc = 0.0f64;

    let total_steps = cfg.epochs * cfg.steps_per_epoch;
    for step in 0..total_steps {
        let mut rng = derive_rng(cfg.seed, step as u64 + 1);
        let mut batch_loss: Option<Tensor<S>> = None;
        for _ in 0..cfg.batch_size {
            let record = usable[rng.random_range(0..usable.len())];
            let max_start = record.0.epochs() - cfg.crop_epochs;
            let start = if max_start == 0 { 0 } else { rng.random_range(0..=max_start) };
            let (components, stages) = crop_record(record, start, cfg.crop_epochs);
            let (components, stages) = if cfg.augment {
                augment_record(&components, &stages, aug, &mut rng)?
            } else {
                (components, stages)
            };
            let p = model.forward(store, &components, &mut Mode::Train(&mut rng))?;
            let loss = cross_entropy(&p, &stages)?;
            batch_loss = Some(match batch_loss {
                Some(acc) => acc.add(&loss)?,
                None => loss,
            });
        }
        let loss = batch_loss.expect("batch size >= 1").scale(1.0 / cfg.batch_size as f64);
        let loss_value = loss.item().into_f64();
        if !loss_value.is_finite() {
            return Err(TrainError::NonFiniteLoss { step, loss: loss_value });
        }
        epoch_loss_acc += loss_value;
        loss.backward()?;
        adamw_step(store, &mut optim_state, &optim_cfg)?;

        if (step + 1) % cfg.steps_per_epoch == 0 {
            let train_loss = epoch_loss_acc / cfg.steps_per_epoch as f64;
            epoch_loss_acc = 0.0;
            let (acc, kappa, mf1, wf1) = if val_set.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else {
                let report = evaluate(model, store, val_set, Pooling::Pooled)?;
                (report.acc, report.kappa, report.mf1, report.wf1)
            };
            log.push(EpochLog {
                step: step + 1,
                train_loss,
                val_acc: acc,
                val_kappa: kappa,
                val_mf1: mf1,
                val_wf1: wf1,
            });
            if val_set.is_empty() || kappa >= best_kappa {
                best_kappa = if kappa.is_nan() { best_kappa } else { kappa };
                best = ParamSnapshot::capture(store);
            }
        }
    }
    Ok(TrainOutcome { log, best_kappa, best, warnings })
}

/// Metric aggregation across records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// One confusion matrix over every epoch of every record (default).
    Pooled,
    /// Metrics per record, then averaged.
    PerRecord,
}

/// Whole-record inference over a labeled dataset.
pub fn evaluate<S: Scalar>(
    model: &SleepStager,
    store: &ParamStore<S>,
    records: &[LabeledRecord<S>],
    pooling: Pooling,
) -> Result<MetricsReport, TrainError> {
    if records.is_empty() {
        return Err(TrainError::NoData("evaluation set is empty".into()));
    }
    let predictions: Vec<Result<StageSequence, TrainError>> = records
        .par_iter()
        .map(|(c, _)| {
            crate::tensor::no_grad(|| {
                let p = model.forward(store, c, &mut Mode::Eval)?;
                Ok(predict(&p))
            })
        })
        .collect();

    match pooling {
        Pooling::Pooled => {
            let mut counts = [[0u64; 5]; 5];
            for ((_, truth), prediction) in records.iter().zip(predictions) {
                let prediction = prediction?;
                let c = confusion_counts(truth, &prediction)?;
                for r in 0..5 {
                    for p in 0..5 {
                        counts[r][p] += c[r][p];
                    }
                }
            }
            Ok(MetricsReport::from_counts(&counts)?)
        }
        Pooling::PerRecord => {
            let mut reports = Vec::with_capacity(records.len());
            for ((_, truth), prediction) in records.iter().zip(predictions) {
                reports.push(MetricsReport::compute(truth, &prediction?)?);
            }
            let n = reports.len() as f64;
            let mut mean = reports[0].clone();
            mean.acc = reports.iter().map(|r| r.acc).sum::<f64>() / n;
            mean.kappa = reports.iter().map(|r| r.kappa).sum::<f64>() / n;
            mean.mf1 = reports.iter().map(|r| r.mf1).sum::<f64>() / n;
            mean.wf1 = reports.iter().map(|r| r.wf1).sum::<f64>() / n;
            mean.epochs = reports.iter().map(|r| r.epochs).sum();
            Ok(mean)
        }
    }
}
