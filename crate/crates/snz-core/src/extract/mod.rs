//! Component extraction: turn raw bed-sensor or cardiac/respiratory-effort
//! channels into the aligned 4 Hz component set the model consumes.

mod beats;
mod breath;
mod filter;
mod movement;

pub use beats::{
    clean_nn_intervals, detect_beats, interpolate_ibi, BeatAnchor, BeatDetectorConfig,
    BeatSeries, CleaningConfig,
};
pub use breath::{extract_breath, BreathConfig, BreathSource};
pub use filter::{apply_filter, design_bessel_bandpass, Biquad, FilterCoeffs};
pub use movement::{detect_movement, MovementBaseline};

use crate::num::Scalar;
use crate::signal::{
    ComponentSet, SignalError, StageSequence, Waveform, SAMPLES_PER_EPOCH,
};

/// Channel carrying the single mixed bed-sensor signal.
pub const CHANNEL_RAW: &str = "raw";
/// Channel carrying the cardiac (ECG-style) signal of a clinical-style record.
pub const CHANNEL_CARDIAC: &str = "cardiac";
/// Channel carrying the respiratory-effort signal of a clinical-style record.
pub const CHANNEL_RESP: &str = "resp";

/// Which kind of raw record is being extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Single mixed piezo-style channel; breath extraction integrates.
    BedSensor,
    /// Separate cardiac and respiratory-effort channels; no integration.
    RespiratoryEffort,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::BedSensor => "bed-sensor",
            SourceKind::RespiratoryEffort => "respiratory-effort",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bed-sensor" => Some(SourceKind::BedSensor),
            "respiratory-effort" => Some(SourceKind::RespiratoryEffort),
            _ => None,
        }
    }
}

/// A raw record: named channels plus optional ground-truth stage labels.
#[derive(Debug, Clone)]
pub struct RawRecord<S: Scalar> {
    pub id: String,
    pub channels: Vec<Waveform<S>>,
    pub stages: Option<StageSequence>,
}

impl<S: Scalar> RawRecord<S> {
    pub fn channel(&self, name: &str) -> Option<&Waveform<S>> {
        self.channels.iter().find(|c| c.label == name)
    }

    /// Infers the source kind from the channels present.
    pub fn infer_source(&self) -> Option<SourceKind> {
        if self.channel(CHANNEL_RAW).is_some() {
            Some(SourceKind::BedSensor)
        } else if self.channel(CHANNEL_CARDIAC).is_some() && self.channel(CHANNEL_RESP).is_some()
        {
            Some(SourceKind::RespiratoryEffort)
        } else {
            None
        }
    }
}

/// All extraction tunables with the pinned defaults.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtractConfig {
    pub beat: BeatDetectorConfig,
    pub cleaning: CleaningConfig,
    pub breath: BreathConfig,
    pub movement: MovementBaseline,
}

/// Output of [`extract_components`].
#[derive(Debug, Clone)]
pub struct Extraction<S: Scalar> {
    pub components: ComponentSet<S>,
    pub stages: Option<StageSequence>,
    pub warnings: Vec<String>,
}

fn required_channel<'a, S: Scalar>(
    record: &'a RawRecord<S>,
    name: &str,
) -> Result<&'a Waveform<S>, SignalError> {
    record.channel(name).ok_or_else(|| {
        SignalError::InvalidInput(format!("record '{}' is missing channel '{name}'", record.id))
    })
}

/// Runs the full extraction pipeline on one record and aligns the three
/// components plus the stage labels to a common whole-epoch length; the
/// trailing remainder shorter than one epoch is discarded.
pub fn extract_components<S: Scalar>(
    record: &RawRecord<S>,
    source: SourceKind,
    cfg: &ExtractConfig,
) -> Result<Extraction<S>, SignalError> {
    let (cardiac_chan, breath_chan, movement_chan, breath_source) = match source {
        SourceKind::BedSensor => {
            let raw = required_channel(record, CHANNEL_RAW)?;
            (raw, raw, raw, BreathSource::BedSensor)
        }
        SourceKind::RespiratoryEffort => {
            let cardiac = required_channel(record, CHANNEL_CARDIAC)?;
            let resp = required_channel(record, CHANNEL_RESP)?;
            (cardiac, resp, cardiac, BreathSource::RespiratoryEffort)
        }
    };

    let durations = [cardiac_chan.duration_s(), breath_chan.duration_s(), movement_chan.duration_s()];
    let spread = durations.iter().fold(f64::MIN, |a, &b| a.max(b))
        - durations.iter().fold(f64::MAX, |a, &b| a.min(b));
    if spread > 30.0 {
        return Err(SignalError::InconsistentRecord(format!(
            "channel durations differ by {spread:.1} s (> 30 s)"
        )));
    }

    let mut warnings = Vec::new();

    let beats = detect_beats(cardiac_chan, &cfg.beat)?;
    let cleaned = clean_nn_intervals(&beats, &cfg.cleaning)?;
    let heartbeat: Waveform<S> = interpolate_ibi(&cleaned, cardiac_chan.duration_s())?;

    let (breath, degenerate) = extract_breath(breath_chan, breath_source, &cfg.breath)?;
    if degenerate {
        warnings.push(format!("record '{}': breath channel has zero variance", record.id));
    }

    let movement = detect_movement(movement_chan, &cfg.movement)?;

    let mut epochs = heartbeat.len().min(breath.len()).min(movement.len()) / SAMPLES_PER_EPOCH;
    if let Some(stages) = &record.stages {
        epochs = epochs.min(stages.len());
    }
    if epochs == 0 {
        return Err(SignalError::TooShort(
            "record shorter than one 30 s epoch after alignment".into(),
        ));
    }
    let n = epochs * SAMPLES_PER_EPOCH;

    let truncate = |w: &Waveform<S>, label: &str| {
        Waveform::new(w.samples[..n].to_vec(), w.sample_rate_hz, label)
    };
    let components = ComponentSet::new(
        truncate(&heartbeat, "heartbeat"),
        truncate(&breath, "breath"),
        crate::signal::BinaryMask::new(movement.values[..n].to_vec(), movement.sample_rate_hz()),
    )?;
    let stages = record
        .stages
        .as_ref()
        .map(|s| StageSequence::new(s.stages[..epochs].to_vec()));

    Ok(Extraction { components, stages, warnings })
}
