//! ResNet-style 1-D feature extractor. The stride plan turns 120 input
//! samples (one 30 s epoch at 4 Hz) into exactly one output position.

use rand_chacha::ChaCha8Rng;

use crate::model::config::{BlockChannels, ModelConfig};
use crate::model::layers::{BatchNorm1dLayer, Conv1dLayer, Mode};
use crate::num::Scalar;
use crate::signal::SAMPLES_PER_EPOCH;
use crate::tensor::{ParamStore, Tensor, TensorError};

/// conv-bn-relu-conv-bn with a skip connection; the skip is projected by a
/// strided 1x1 conv + bn whenever the stride or channel count changes.
pub struct BasicBlock {
    conv1: Conv1dLayer,
    bn1: BatchNorm1dLayer,
    conv2: Conv1dLayer,
    bn2: BatchNorm1dLayer,
    projection: Option<(Conv1dLayer, BatchNorm1dLayer)>,
}

impl BasicBlock {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
        bn_momentum: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let conv1 =
            Conv1dLayer::new(store, &format!("{name}.conv1"), c_in, c_out, 3, stride, 1, rng);
        let bn1 = BatchNorm1dLayer::new(store, &format!("{name}.bn1"), c_out, bn_momentum);
        let conv2 = Conv1dLayer::new(store, &format!("{name}.conv2"), c_out, c_out, 3, 1, 1, rng);
        let bn2 = BatchNorm1dLayer::new(store, &format!("{name}.bn2"), c_out, bn_momentum);
        let projection = (stride != 1 || c_in != c_out).then(|| {
            (
                Conv1dLayer::new(store, &format!("{name}.proj"), c_in, c_out, 1, stride, 0, rng),
                BatchNorm1dLayer::new(store, &format!("{name}.proj_bn"), c_out, bn_momentum),
            )
        });
        Self { conv1, bn1, conv2, bn2, projection }
    }

    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        x: &Tensor<S>,
        mode: &mut Mode<'_>,
    ) -> Result<Tensor<S>, TensorError> {
        let main = self.bn1.forward(store, &self.conv1.forward(store, x)?, mode)?.relu();
        let main = self.bn2.forward(store, &self.conv2.forward(store, &main)?, mode)?;
        let skip = match &self.projection {
            Some((conv, bn)) => bn.forward(store, &conv.forward(store, x)?, mode)?,
            None => x.clone(),
        };
        Ok(main.add(&skip)?.relu())
    }
}

/// One feature extractor: 7-wide stem conv, max pool, then the basic blocks.
pub struct ResFeat {
    conv1: Conv1dLayer,
    bn1: BatchNorm1dLayer,
    blocks: Vec<BasicBlock>,
    out_dim: usize,
}

impl ResFeat {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        config: &ModelConfig,
        in_channels: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let conv1 = Conv1dLayer::new(
            store,
            &format!("{name}.conv1"),
            in_channels,
            config.conv1_channels,
            7,
            2,
            3,
            rng,
        );
        let bn1 = BatchNorm1dLayer::new(
            store,
            &format!("{name}.bn1"),
            config.conv1_channels,
            config.bn_momentum,
        );
        let mut blocks = Vec::with_capacity(config.blocks.len());
        let mut c_in = config.conv1_channels;
        for (i, spec) in config.blocks.iter().enumerate() {
            let c_out = match spec.channels {
                BlockChannels::Fixed(c) => c,
                BlockChannels::OutDim => out_dim,
            };
            blocks.push(BasicBlock::new(
                store,
                &format!("{name}.block{}", i + 1),
                c_in,
                c_out,
                spec.stride,
                config.bn_momentum,
                rng,
            ));
            c_in = c_out;
        }
        Self { conv1, bn1, blocks, out_dim }
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Maps `[channels, 120 T]` to per-epoch features `[T, out_dim]`.
    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        x: &Tensor<S>,
        mode: &mut Mode<'_>,
    ) -> Result<Tensor<S>, TensorError> {
        if x.shape().len() != 2 || !x.shape()[1].is_multiple_of(SAMPLES_PER_EPOCH) || x.shape()[1] == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "resfeat input (length must be a positive multiple of 120)",
                lhs: x.shape().to_vec(),
                rhs: vec![x.shape()[0], SAMPLES_PER_EPOCH],
            });
        }
        let mut h = self.bn1.forward(store, &self.conv1.forward(store, x)?, mode)?.relu();
        h = h.maxpool1d(3, 2, 1)?;
        for block in &self.blocks {
            h = block.forward(store, &h, mode)?;
        }
        debug_assert_eq!(h.shape()[1], x.shape()[1] / SAMPLES_PER_EPOCH);
        h.transpose()
    }
}
