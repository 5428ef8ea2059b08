//! Zero-shot sleep staging toolkit: extract heartbeat, breath and movement
//! components from raw biosignals, augment them for cross-sensor robustness,
//! and label 30-second epochs with a ResNet + Transformer sequence model.
//!
//! Numeric code is generic over the scalar type ([`num::Scalar`]); the
//! aliases at the crate root pin the defaults used by the pipeline: `f64`
//! for signal processing, `f32` for model training, with `f64` tensors
//! available for gradient checking.

pub mod augment;
pub mod bundle;
pub mod config;
pub mod dataset;
pub mod extract;
pub mod fft;
pub mod metrics;
pub mod model;
pub mod num;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod tensor;
pub mod train;

pub use signal::{Stage, StageSequence};

/// Waveform at the signal-processing default precision.
pub type Waveform = signal::Waveform<f64>;
/// Component triple at the signal-processing default precision.
pub type ComponentSet = signal::ComponentSet<f64>;
/// Component triple at training precision.
pub type ComponentSet32 = signal::ComponentSet<f32>;
/// Tensor at the training default precision.
pub type Tensor = tensor::Tensor<f32>;
/// Tensor at gradient-checking precision.
pub type Tensor64 = tensor::Tensor<f64>;
