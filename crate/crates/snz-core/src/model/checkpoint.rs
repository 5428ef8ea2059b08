//! Checkpoint save/load through the record-bundle container: one tensor
//! channel per parameter and buffer, with the preset recorded in the id.

use std::path::Path;

use crate::bundle::{read_bundle, write_bundle, Channel, RecordBundle};
use crate::model::config::{ModelConfig, Preset};
use crate::model::{build_model, ModelError, SleepStager};
use crate::num::Scalar;
use crate::tensor::ParamStore;

const BUFFER_PREFIX: &str = "buffer:";

/// Writes every parameter and buffer as a named tensor channel.
pub fn save_checkpoint<S: Scalar>(
    store: &ParamStore<S>,
    preset: Preset,
    path: &Path,
) -> Result<(), ModelError> {
    let mut bundle = RecordBundle::new(format!("checkpoint:{}", preset.as_str()));
    for (name, tensor, _) in store.iter() {
        let samples: Vec<f32> = tensor.data().iter().map(|v| v.into_f64() as f32).collect();
        bundle.channels.push(Channel::tensor(name, tensor.shape(), samples));
    }
    for (name, values) in store.buffer_iter() {
        let samples: Vec<f32> = values.iter().map(|v| v.into_f64() as f32).collect();
        bundle
            .channels
            .push(Channel::tensor(format!("{BUFFER_PREFIX}{name}"), &[samples.len()], samples));
    }
    write_bundle(&bundle, path).map_err(|e| ModelError::Checkpoint(e.to_string()))
}

/// Rebuilds the model recorded at `path` and fills its parameters and
/// buffers. Fails on unknown preset, missing tensors, or shape mismatches.
pub fn load_checkpoint<S: Scalar>(
    path: &Path,
) -> Result<(SleepStager, ParamStore<S>), ModelError> {
    let bundle = read_bundle(path).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let preset_name = bundle
        .record_id
        .strip_prefix("checkpoint:")
        .ok_or_else(|| ModelError::Checkpoint(format!("'{}' is not a checkpoint", bundle.record_id)))?;
    let preset = Preset::parse(preset_name)
        .ok_or_else(|| ModelError::Checkpoint(format!("unknown preset '{preset_name}'")))?;
    let (model, mut store) = build_model::<S>(ModelConfig::preset(preset), 0)?;

    for channel in &bundle.channels {
        let values: Vec<S> = channel.samples.iter().map(|&v| S::of_f64(v as f64)).collect();
        if let Some(buffer_name) = channel.name.strip_prefix(BUFFER_PREFIX) {
            let id = store.find_buffer(buffer_name).ok_or_else(|| {
                ModelError::Checkpoint(format!("unexpected buffer '{buffer_name}'"))
            })?;
            store.set_buffer(id, values);
        } else {
            let id = store.find(&channel.name).ok_or_else(|| {
                ModelError::Checkpoint(format!("unexpected tensor '{}'", channel.name))
            })?;
            if store.get(id).shape() != channel.shape.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor '{}' has shape {:?}, expected {:?}",
                    channel.name,
                    channel.shape,
                    store.get(id).shape()
                )));
            }
            store.set_data(id, values);
        }
    }

    // every parameter must have been provided
    let provided: std::collections::HashSet<&str> =
        bundle.channels.iter().map(|c| c.name.as_str()).collect();
    for (name, _, _) in store.iter() {
        if !provided.contains(name) {
            return Err(ModelError::Checkpoint(format!("checkpoint missing tensor '{name}'")));
        }
    }
    Ok((model, store))
}
