//! The sleep staging network: three ResNet feature extractors over the
//! component channels, a Transformer context encoder with sinusoidal
//! positions, and an MLP classifier emitting per-epoch stage probabilities.

mod checkpoint;
mod config;
mod encoder;
mod layers;
mod resfeat;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{BlockChannels, BlockSpec, ConfigError, ModelConfig, Preset};
pub use layers::Mode;
pub use resfeat::{BasicBlock, ResFeat};

use thiserror::Error;

use crate::num::Scalar;
use crate::rng::derive_rng;
use crate::signal::{ComponentSet, Stage, StageSequence};
use crate::tensor::{concat, ParamStore, Tensor, TensorError};

use encoder::Encoder;
use layers::LinearLayer;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid model input: {0}")]
    Input(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Millisecond inter-beat intervals are scaled to seconds before entering the
/// network, keeping early batch-norm statistics near unit scale.
pub const HEARTBEAT_INPUT_SCALE: f64 = 1e-3;

/// Sinusoidal positional encoding: `e[t, 2k] = sin(t / 10000^(2k/d))`,
/// `e[t, 2k+1] = cos(t / 10000^(2k/d))`, with zero-based positions.
pub fn positional_encoding<S: Scalar>(
    timesteps: usize,
    d_model: usize,
) -> Result<Tensor<S>, ModelError> {
    if !d_model.is_multiple_of(2) {
        return Err(ModelError::Config(ConfigError::Invalid(format!(
            "positional encoding needs an even dimension, got {d_model}"
        ))));
    }
    let mut data = Vec::with_capacity(timesteps * d_model);
    for t in 0..timesteps {
        for k in 0..d_model / 2 {
            let rate = 10000f64.powf(2.0 * k as f64 / d_model as f64);
            let angle = t as f64 / rate;
            data.push(S::of_f64(angle.sin()));
            data.push(S::of_f64(angle.cos()));
        }
    }
    Ok(Tensor::leaf(data, &[timesteps, d_model]))
}

/// Model structure. Parameters live in the companion [`ParamStore`] so the
/// same structure serves `f32` training and `f64` gradient checking.
pub struct SleepStager {
    pub config: ModelConfig,
    extractors: [ResFeat; 3],
    encoder: Encoder,
    fc1: LinearLayer,
    fc2: LinearLayer,
}

/// Builds a model and its freshly initialized parameter store.
pub fn build_model<S: Scalar>(
    config: ModelConfig,
    seed: u64,
) -> Result<(SleepStager, ParamStore<S>), ModelError> {
    config.validate()?;
    let mut store = ParamStore::new();
    let mut rng = derive_rng(seed, 0);
    let [d1, d2, d3] = config.feature_dims;
    let extractors = [
        ResFeat::new(&mut store, "f1", &config, 2, d1, &mut rng),
        ResFeat::new(&mut store, "f2", &config, 2, d2, &mut rng),
        ResFeat::new(&mut store, "f3", &config, 3, d3, &mut rng),
    ];
    let encoder = Encoder::new(
        &mut store,
        "encoder",
        config.encoder_layers,
        config.d_model,
        config.feedforward_dim,
        config.heads,
        config.dropout,
        &mut rng,
    );
    let fc1 = LinearLayer::new(&mut store, "classifier.fc1", config.d_model, config.mlp_hidden, &mut rng);
    let fc2 = LinearLayer::new(&mut store, "classifier.fc2", config.mlp_hidden, config.classes, &mut rng);
    Ok((SleepStager { config, extractors, encoder, fc1, fc2 }, store))
}

impl SleepStager {
    /// Direct access to one extractor (0, 1 or 2) for shape tests.
    pub fn extractor(&self, index: usize) -> &ResFeat {
        &self.extractors[index]
    }

    fn input_tensors<S: Scalar>(&self, c: &ComponentSet<S>) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
        let n = c.heartbeat.len();
        let scale = S::of_f64(HEARTBEAT_INPUT_SCALE);
        let hb: Vec<S> = c.heartbeat.samples.iter().map(|&v| v * scale).collect();
        let br: Vec<S> = c.breath.samples.clone();
        let mv: Vec<S> = c.movement.values.iter().map(|&v| S::of_usize(v as usize)).collect();

        let mut x1 = Vec::with_capacity(2 * n);
        x1.extend_from_slice(&hb);
        x1.extend_from_slice(&mv);
        let mut x2 = Vec::with_capacity(2 * n);
        x2.extend_from_slice(&br);
        x2.extend_from_slice(&mv);
        let mut x3 = Vec::with_capacity(3 * n);
        x3.extend_from_slice(&hb);
        x3.extend_from_slice(&br);
        x3.extend_from_slice(&mv);
        (
            Tensor::leaf(x1, &[2, n]),
            Tensor::leaf(x2, &[2, n]),
            Tensor::leaf(x3, &[3, n]),
        )
    }

    /// Per-epoch local features: the first extractor sees heartbeat and
    /// movement, the second breath and movement, the third all three; their
    /// outputs are concatenated in that order into `[T, d_model]`.
    pub fn aggregate_features<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        c: &ComponentSet<S>,
        mode: &mut Mode<'_>,
    ) -> Result<Tensor<S>, ModelError> {
        c.check_invariants().map_err(|e| ModelError::Input(e.to_string()))?;
        let (x1, x2, x3) = self.input_tensors(c);
        let z1 = self.extractors[0].forward(store, &x1, mode)?;
        let z2 = self.extractors[1].forward(store, &x2, mode)?;
        let z3 = self.extractors[2].forward(store, &x3, mode)?;
        Ok(concat(1, &[z1, z2, z3])?)
    }

    /// Full forward pass: probabilities over the five stages per epoch.
    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        c: &ComponentSet<S>,
        mode: &mut Mode<'_>,
    ) -> Result<Tensor<S>, ModelError> {
        let z = self.aggregate_features(store, c, mode)?;
        let t = z.shape()[0];
        let pe = positional_encoding::<S>(t, self.config.d_model)?;
        let encoded = self.encoder.forward(store, &z.add(&pe)?, mode)?;
        let hidden = self.fc1.forward(store, &encoded)?.relu();
        let logits = self.fc2.forward(store, &hidden)?;
        Ok(logits.softmax_rows())
    }
}

/// Argmax decoding of probability rows; ties break toward the lower class
/// index.
pub fn predict<S: Scalar>(probabilities: &Tensor<S>) -> StageSequence {
    let classes = probabilities.shape()[1];
    debug_assert_eq!(classes, Stage::COUNT);
    let stages = probabilities
        .data()
        .chunks(classes)
        .map(|row| {
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            Stage::from_code(best as u8).expect("class index within stage range")
        })
        .collect();
    StageSequence::new(stages)
}

/// Summed cross-entropy of predicted probabilities against the labels.
pub fn cross_entropy<S: Scalar>(
    probabilities: &Tensor<S>,
    stages: &StageSequence,
) -> Result<Tensor<S>, ModelError> {
    let targets: Vec<usize> = stages.stages.iter().map(|s| s.code() as usize).collect();
    Ok(probabilities.cross_entropy_sum(&targets)?)
}
