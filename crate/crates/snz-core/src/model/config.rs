//! Architecture presets and their validation.

use thiserror::Error;

use crate::signal::SAMPLES_PER_EPOCH;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid model config: {0}")]
    Invalid(String),
}

/// Channel width of one basic block: a fixed count or the extractor's output
/// dimensionality (which differs between the three extractors).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockChannels {
    Fixed(usize),
    OutDim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub channels: BlockChannels,
    pub stride: usize,
}

const fn fixed(channels: usize, stride: usize) -> BlockSpec {
    BlockSpec { channels: BlockChannels::Fixed(channels), stride }
}

const fn out_dim(stride: usize) -> BlockSpec {
    BlockSpec { channels: BlockChannels::OutDim, stride }
}

/// Named presets selectable from the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Default,
    Tiny,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Tiny => "tiny",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "default" => Some(Preset::Default),
            "tiny" => Some(Preset::Tiny),
            _ => None,
        }
    }
}

/// Full architecture description. The stem conv (stride 2) plus max pool
/// (stride 2) and the block strides must multiply to 120 so each 30 s epoch
/// at 4 Hz lands on exactly one output position.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub preset: Preset,
    pub conv1_channels: usize,
    pub blocks: Vec<BlockSpec>,
    pub feature_dims: [usize; 3],
    pub d_model: usize,
    pub encoder_layers: usize,
    pub feedforward_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub classes: usize,
    pub mlp_hidden: usize,
    /// Momentum of the batch-norm running statistics (fraction of the fresh
    /// batch statistics folded in per forward pass).
    pub bn_momentum: f64,
}

impl ModelConfig {
    /// Full-size architecture: 16 basic blocks in widths 64/128/256/out with
    /// strides 2, 3 and 5 at blocks 1, 4 and 14, a 6-layer 512-wide encoder
    /// with a 2048-wide feedforward, and a 64-wide classifier hidden layer.
    pub fn default_preset() -> Self {
        let mut blocks = Vec::with_capacity(16);
        blocks.push(fixed(64, 2));
        blocks.extend([fixed(64, 1); 2]);
        blocks.push(fixed(128, 3));
        blocks.extend([fixed(128, 1); 3]);
        blocks.extend([fixed(256, 1); 6]);
        blocks.push(out_dim(5));
        blocks.extend([out_dim(1); 2]);
        Self {
            preset: Preset::Default,
            conv1_channels: 64,
            blocks,
            feature_dims: [128, 128, 256],
            d_model: 512,
            encoder_layers: 6,
            feedforward_dim: 2048,
            heads: 8,
            dropout: 0.05,
            classes: 5,
            mlp_hidden: 64,
            bn_momentum: 0.01,
        }
    }

    /// Scaled-down preset for CI and desk-scale experiments; preserves the
    /// total downsampling factor of 120.
    pub fn tiny() -> Self {
        Self {
            preset: Preset::Tiny,
            conv1_channels: 16,
            blocks: vec![fixed(16, 2), fixed(24, 3), fixed(32, 5), out_dim(1)],
            feature_dims: [16, 16, 32],
            d_model: 64,
            encoder_layers: 2,
            feedforward_dim: 128,
            heads: 4,
            dropout: 0.05,
            classes: 5,
            mlp_hidden: 16,
            bn_momentum: 0.01,
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Default => Self::default_preset(),
            Preset::Tiny => Self::tiny(),
        }
    }

    /// Product of all strides including the stem conv and max pool.
    pub fn total_downsample(&self) -> usize {
        4 * self.blocks.iter().map(|b| b.stride).product::<usize>()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.total_downsample() != SAMPLES_PER_EPOCH {
            return Err(ConfigError::Invalid(format!(
                "stride product {} != {SAMPLES_PER_EPOCH}",
                self.total_downsample()
            )));
        }
        if self.feature_dims.iter().sum::<usize>() != self.d_model {
            return Err(ConfigError::Invalid(format!(
                "feature dims {:?} do not sum to d_model {}",
                self.feature_dims, self.d_model
            )));
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(ConfigError::Invalid(format!("d_model {} must be even", self.d_model)));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(ConfigError::Invalid(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::Invalid(format!("dropout {} out of range", self.dropout)));
        }
        if self.classes != crate::signal::Stage::COUNT {
            return Err(ConfigError::Invalid(format!(
                "classifier must cover {} stages, got {}",
                crate::signal::Stage::COUNT,
                self.classes
            )));
        }
        Ok(())
    }
}
