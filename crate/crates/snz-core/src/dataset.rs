//! Conversions between domain types and the record-bundle container.

use crate::bundle::{BundleError, Channel, RecordBundle, StageBlock};
use crate::extract::RawRecord;
use crate::num::Scalar;
use crate::signal::{BinaryMask, ComponentSet, StageSequence, Waveform, COMPONENT_HZ};
use crate::synth::GroundTruth;

/// Channel names of a component bundle.
pub const CHANNEL_HEARTBEAT: &str = "heartbeat";
pub const CHANNEL_BREATH: &str = "breath";
pub const CHANNEL_MOVEMENT: &str = "movement";
/// Truth sidecar channels; event lists use a nominal rate of 1 Hz and carry
/// values in seconds.
pub const CHANNEL_BEAT_TIMES: &str = "beat_times";
pub const CHANNEL_MOVEMENT_INTERVALS: &str = "movement_intervals";
pub const CHANNEL_BREATH_PHASE: &str = "breath_phase";

fn to_f32<S: Scalar>(samples: &[S]) -> Vec<f32> {
    samples.iter().map(|v| v.into_f64() as f32).collect()
}

fn of_f32<S: Scalar>(samples: &[f32]) -> Vec<S> {
    samples.iter().map(|&v| S::of_f64(v as f64)).collect()
}

/// Raw record (one or more waveform channels plus optional stages).
pub fn raw_record_to_bundle<S: Scalar>(record: &RawRecord<S>) -> RecordBundle {
    let mut bundle = RecordBundle::new(record.id.clone());
    for c in &record.channels {
        bundle.channels.push(Channel::time_series(
            c.label.clone(),
            c.sample_rate_hz,
            to_f32(&c.samples),
        ));
    }
    bundle.stages = record.stages.as_ref().map(StageBlock::from_sequence);
    bundle
}

pub fn bundle_to_raw_record<S: Scalar>(bundle: &RecordBundle) -> Result<RawRecord<S>, BundleError> {
    let channels = bundle
        .channels
        .iter()
        .map(|c| Waveform::new(of_f32(&c.samples), c.sample_rate_hz, c.name.clone()))
        .collect();
    let stages = bundle.stages.as_ref().map(|s| s.to_sequence()).transpose()?;
    Ok(RawRecord { id: bundle.record_id.clone(), channels, stages })
}

/// Component bundle: the aligned 4 Hz triple plus optional stages.
pub fn components_to_bundle<S: Scalar>(
    id: &str,
    components: &ComponentSet<S>,
    stages: Option<&StageSequence>,
) -> RecordBundle {
    let mut bundle = RecordBundle::new(id);
    bundle.channels.push(Channel::time_series(
        CHANNEL_HEARTBEAT,
        COMPONENT_HZ,
        to_f32(&components.heartbeat.samples),
    ));
    bundle.channels.push(Channel::time_series(
        CHANNEL_BREATH,
        COMPONENT_HZ,
        to_f32(&components.breath.samples),
    ));
    bundle.channels.push(Channel::time_series(
        CHANNEL_MOVEMENT,
        COMPONENT_HZ,
        components.movement.values.iter().map(|&v| v as f32).collect(),
    ));
    bundle.stages = stages.map(StageBlock::from_sequence);
    bundle
}

pub fn bundle_to_components<S: Scalar>(
    bundle: &RecordBundle,
) -> Result<(ComponentSet<S>, Option<StageSequence>), BundleError> {
    let get = |name: &str| {
        bundle.channel(name).ok_or_else(|| {
            BundleError::MalformedHeader(format!(
                "bundle '{}' is missing component channel '{name}'",
                bundle.record_id
            ))
        })
    };
    let hb = get(CHANNEL_HEARTBEAT)?;
    let br = get(CHANNEL_BREATH)?;
    let mv = get(CHANNEL_MOVEMENT)?;
    let movement_values: Vec<u8> = mv
        .samples
        .iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(0u8)
            } else if v == 1.0 {
                Ok(1u8)
            } else {
                Err(BundleError::MalformedHeader(format!(
                    "movement channel holds non-binary value {v}"
                )))
            }
        })
        .collect::<Result<_, _>>()?;
    let components = ComponentSet::new(
        Waveform::new(of_f32(&hb.samples), hb.sample_rate_hz, CHANNEL_HEARTBEAT),
        Waveform::new(of_f32(&br.samples), br.sample_rate_hz, CHANNEL_BREATH),
        BinaryMask::new(movement_values, mv.sample_rate_hz),
    )
    .map_err(|e| BundleError::MalformedHeader(e.to_string()))?;
    let stages = bundle.stages.as_ref().map(|s| s.to_sequence()).transpose()?;
    Ok((components, stages))
}

/// Ground-truth sidecar: beat times, movement intervals (flattened start/end
/// pairs), breath phase and the stage labels.
pub fn truth_to_bundle(id: &str, truth: &GroundTruth) -> RecordBundle {
    let mut bundle = RecordBundle::new(id);
    bundle.channels.push(Channel::time_series(
        CHANNEL_BEAT_TIMES,
        1.0,
        truth.beat_times_s.iter().map(|&v| v as f32).collect(),
    ));
    let mut intervals = Vec::with_capacity(truth.movement_intervals.len() * 2);
    for &(s, e) in &truth.movement_intervals {
        intervals.push(s as f32);
        intervals.push(e as f32);
    }
    bundle.channels.push(Channel::time_series(CHANNEL_MOVEMENT_INTERVALS, 1.0, intervals));
    bundle.channels.push(Channel::time_series(
        CHANNEL_BREATH_PHASE,
        COMPONENT_HZ,
        truth.breath_phase.iter().map(|&v| v as f32).collect(),
    ));
    bundle.stages = Some(StageBlock::from_sequence(&truth.stages));
    bundle
}
