//! Transformer encoder over the per-epoch feature sequence: post-norm layers
//! with scaled dot-product multi-head self-attention (no causal mask; whole
//! nights are labeled offline) and a ReLU feedforward block. Dropout acts on
//! the attention weights and the feedforward activations.

use rand_chacha::ChaCha8Rng;

use crate::model::layers::{LayerNormLayer, LinearLayer, Mode};
use crate::num::Scalar;
use crate::tensor::{concat, ParamStore, Tensor, TensorError};

pub struct MultiHeadAttention {
    wq: LinearLayer,
    wk: LinearLayer,
    wv: LinearLayer,
    wo: LinearLayer,
    heads: usize,
    head_dim: usize,
}

impl MultiHeadAttention {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        d_model: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert_eq!(d_model % heads, 0, "d_model must divide evenly into heads");
        Self {
            wq: LinearLayer::new(store, &format!("{name}.wq"), d_model, d_model, rng),
            wk: LinearLayer::new(store, &format!("{name}.wk"), d_model, d_model, rng),
            wv: LinearLayer::new(store, &format!("{name}.wv"), d_model, d_model, rng),
            wo: LinearLayer::new(store, &format!("{name}.wo"), d_model, d_model, rng),
            heads,
            head_dim: d_model / heads,
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        x: &Tensor<S>,
        dropout: f64,
        mode: &mut Mode<'_>,
    ) -> Result<Tensor<S>, TensorError> {
        let q = self.wq.forward(store, x)?;
        let k = self.wk.forward(store, x)?;
        let v = self.wv.forward(store, x)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut head_outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let offset = h * self.head_dim;
            let qh = q.slice_cols(offset, self.head_dim)?;
            let kh = k.slice_cols(offset, self.head_dim)?;
            let vh = v.slice_cols(offset, self.head_dim)?;
            let scores = qh.matmul(&kh.transpose()?)?.scale(scale);
            let weights = mode.dropout(scores.softmax_rows(), dropout);
            head_outputs.push(weights.matmul(&vh)?);
        }
        self.wo.forward(store, &concat(1, &head_outputs)?)
    }
}

struct EncoderLayer {
    attention: MultiHeadAttention,
    norm1: LayerNormLayer,
    fc1: LinearLayer,
    fc2: LinearLayer,
    norm2: LayerNormLayer,
}

impl EncoderLayer {
    fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        d_model: usize,
        ff_dim: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            attention: MultiHeadAttention::new(
                store,
                &format!("{name}.attn"),
                d_model,
                heads,
                rng,
            ),
            norm1: LayerNormLayer::new(store, &format!("{name}.norm1"), d_model),
            fc1: LinearLayer::new(store, &format!("{name}.fc1"), d_model, ff_dim, rng),
            fc2: LinearLayer::new(store, &format!("{name}.fc2"), ff_dim, d_model, rng),
            norm2: LayerNormLayer::new(store, &format!("{name}.norm2"), d_model),
        }
    }

    fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        x: &Tensor<S>,
        dropout: f64,
        mode: &mut Mode<'_>,
    ) -> Result<Tensor<S>, TensorError> {
        let attended = self.attention.forward(store, x, dropout, mode)?;
        let x = self.norm1.forward(store, &x.add(&attended)?)?;
        let hidden = mode.dropout(self.fc1.forward(store, &x)?.relu(), dropout);
        let ff = self.fc2.forward(store, &hidden)?;
        self.norm2.forward(store, &x.add(&ff)?)
    }
}

pub struct Encoder {
    layers: Vec<EncoderLayer>,
    dropout: f64,
}

impl Encoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        n_layers: usize,
        d_model: usize,
        ff_dim: usize,
        heads: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|i| {
                EncoderLayer::new(store, &format!("{name}.layer{i}"), d_model, ff_dim, heads, rng)
            })
            .collect();
        Self { layers, dropout }
    }

    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        x: &Tensor<S>,
        mode: &mut Mode<'_>,
    ) -> Result<Tensor<S>, TensorError> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(store, &h, self.dropout, mode)?;
        }
        Ok(h)
    }
}
