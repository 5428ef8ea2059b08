//! Pipeline configuration file: one TOML document covering extraction,
//! augmentation, model preset, training and synthesis. Unknown keys are
//! rejected; every default matches the pinned pipeline values.

use serde::Deserialize;
use thiserror::Error;

use crate::augment::AugmentConfig;
use crate::extract::{
    BeatDetectorConfig, BreathConfig, CleaningConfig, ExtractConfig, MovementBaseline,
};
use crate::model::Preset;
use crate::synth::SynthConfig;
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum PipelineConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub extract: ExtractSection,
    pub augment: AugmentSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSection {
    pub beat_band_low_hz: f64,
    pub beat_band_high_hz: f64,
    pub envelope_window_s: f64,
    pub refractory_s: f64,
    pub threshold_factor: f64,
    pub median_window_s: f64,
    pub artifact_mult: f64,
    pub artifact_window_s: f64,
    pub artifact_dilate_s: f64,
    pub peak_mean_fraction: f64,
    pub tail_guard_s: f64,
    pub tail_fraction: f64,
    pub plausible_low_ms: f64,
    pub plausible_high_ms: f64,
    pub ectopic_fraction: f64,
    pub breath_low_hz: f64,
    pub breath_high_hz: f64,
    pub breath_order: usize,
    pub movement_window_s: f64,
    pub movement_baseline_windows: usize,
    pub movement_multiplier: f64,
}

impl Default for ExtractSection {
    fn default() -> Self {
        let beat = BeatDetectorConfig::default();
        let clean = CleaningConfig::default();
        let breath = BreathConfig::default();
        let movement = MovementBaseline::default();
        Self {
            beat_band_low_hz: beat.band_low_hz,
            beat_band_high_hz: beat.band_high_hz,
            envelope_window_s: beat.envelope_window_s,
            refractory_s: beat.refractory_s,
            threshold_factor: beat.threshold_factor,
            median_window_s: beat.median_window_s,
            artifact_mult: beat.artifact_mult,
            artifact_window_s: beat.artifact_window_s,
            artifact_dilate_s: beat.artifact_dilate_s,
            peak_mean_fraction: beat.peak_mean_fraction,
            tail_guard_s: beat.tail_guard_s,
            tail_fraction: beat.tail_fraction,
            plausible_low_ms: clean.plausible_low_ms,
            plausible_high_ms: clean.plausible_high_ms,
            ectopic_fraction: clean.ectopic_fraction,
            breath_low_hz: breath.low_hz,
            breath_high_hz: breath.high_hz,
            breath_order: breath.order,
            movement_window_s: movement.window_s,
            movement_baseline_windows: movement.baseline_windows,
            movement_multiplier: movement.multiplier,
        }
    }
}

impl ExtractSection {
    pub fn to_extract_config(&self) -> ExtractConfig {
        ExtractConfig {
            beat: BeatDetectorConfig {
                band_low_hz: self.beat_band_low_hz,
                band_high_hz: self.beat_band_high_hz,
                envelope_window_s: self.envelope_window_s,
                refractory_s: self.refractory_s,
                threshold_factor: self.threshold_factor,
                median_window_s: self.median_window_s,
                artifact_mult: self.artifact_mult,
                artifact_window_s: self.artifact_window_s,
                artifact_dilate_s: self.artifact_dilate_s,
                peak_mean_fraction: self.peak_mean_fraction,
                tail_guard_s: self.tail_guard_s,
                tail_fraction: self.tail_fraction,
            },
            cleaning: CleaningConfig {
                plausible_low_ms: self.plausible_low_ms,
                plausible_high_ms: self.plausible_high_ms,
                ectopic_fraction: self.ectopic_fraction,
            },
            breath: BreathConfig {
                low_hz: self.breath_low_hz,
                high_hz: self.breath_high_hz,
                order: self.breath_order,
            },
            movement: MovementBaseline {
                window_s: self.movement_window_s,
                baseline_windows: self.movement_baseline_windows,
                multiplier: self.movement_multiplier,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub amp_low: f64,
    pub amp_high: f64,
    pub speed_low: f64,
    pub speed_high: f64,
    pub seed: u64,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let a = AugmentConfig::default();
        Self {
            amp_low: a.amp_low,
            amp_high: a.amp_high,
            speed_low: a.speed_low,
            speed_high: a.speed_high,
            seed: a.rng_seed,
        }
    }
}

impl AugmentSection {
    pub fn to_augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            amp_low: self.amp_low,
            amp_high: self.amp_high,
            speed_low: self.speed_low,
            speed_high: self.speed_high,
            rng_seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: String,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { preset: "default".into(), init_seed: 0 }
    }
}

impl ModelSection {
    pub fn preset(&self) -> Result<Preset, PipelineConfigError> {
        Preset::parse(&self.preset).ok_or_else(|| {
            PipelineConfigError::Invalid(format!(
                "unknown preset '{}' (expected 'default' or 'tiny')",
                self.preset
            ))
        })
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub crop_epochs: usize,
    pub seed: u64,
    pub augment: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            steps_per_epoch: t.steps_per_epoch,
            batch_size: t.batch_size,
            lr: t.lr,
            weight_decay: t.weight_decay,
            crop_epochs: t.crop_epochs,
            seed: t.seed,
            augment: t.augment,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            steps_per_epoch: self.steps_per_epoch,
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            crop_epochs: self.crop_epochs,
            seed: self.seed,
            augment: self.augment,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub seed: u64,
    pub duration_s: f64,
    pub raw_rate_hz: f64,
    pub transition_jump: f64,
    pub clean_snr_db: f64,
    pub degraded_snr_db: f64,
    pub drift_depth: f64,
    pub drift_period_s: f64,
    pub missed_beat_prob: f64,
    pub clock_skew_low: f64,
    pub clock_skew_high: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            seed: s.seed,
            duration_s: s.duration_s,
            raw_rate_hz: s.raw_rate_hz,
            transition_jump: s.transition_jump,
            clean_snr_db: s.clean_snr_db,
            degraded_snr_db: s.degraded_snr_db,
            drift_depth: s.drift_depth,
            drift_period_s: s.drift_period_s,
            missed_beat_prob: s.missed_beat_prob,
            clock_skew_low: s.clock_skew_low,
            clock_skew_high: s.clock_skew_high,
        }
    }
}

impl SynthSection {
    pub fn to_synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            duration_s: self.duration_s,
            raw_rate_hz: self.raw_rate_hz,
            transition_jump: self.transition_jump,
            clean_snr_db: self.clean_snr_db,
            degraded_snr_db: self.degraded_snr_db,
            drift_depth: self.drift_depth,
            drift_period_s: self.drift_period_s,
            missed_beat_prob: self.missed_beat_prob,
            clock_skew_low: self.clock_skew_low,
            clock_skew_high: self.clock_skew_high,
            ..Default::default()
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineConfigError> {
        toml::from_str(text).map_err(|e| PipelineConfigError::Parse(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, PipelineConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }
}
