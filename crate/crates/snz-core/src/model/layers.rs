//! Parameterized layers. Each layer owns handles into a [`ParamStore`] and
//! reads its weights at forward time, so the optimizer can swap parameter
//! values without touching the layer structure.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::num::Scalar;
use crate::tensor::{BufferId, ParamId, ParamStore, Tensor, TensorError};

/// Per-pass state: evaluation is deterministic, training carries the
/// generator that drives dropout masks.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    /// Applies dropout on the training path, identity otherwise.
    pub fn dropout<S: Scalar>(&mut self, x: Tensor<S>, p: f64) -> Tensor<S> {
        match self {
            Mode::Train(rng) if p > 0.0 => x.dropout(p, *rng),
            _ => x,
        }
    }
}

/// Standard normal draw via Box-Muller.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub struct Conv1dLayer {
    pub w: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1dLayer {
    /// He-initialized convolution without bias (every use site is followed by
    /// batch norm).
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let std = (2.0 / (c_in * kernel) as f64).sqrt();
        let data = (0..c_out * c_in * kernel).map(|_| S::of_f64(normal(rng) * std)).collect();
        let w = store.register(format!("{name}.weight"), data, &[c_out, c_in, kernel]);
        Self { w, stride, padding }
    }

    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        x: &Tensor<S>,
    ) -> Result<Tensor<S>, TensorError> {
        x.conv1d(&store.get(self.w), None, self.stride, self.padding)
    }
}

pub struct BatchNorm1dLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm1dLayer {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        channels: usize,
        momentum: f64,
    ) -> Self {
        Self {
            gamma: store.register(format!("{name}.gamma"), vec![S::one(); channels], &[channels]),
            beta: store.register(format!("{name}.beta"), vec![S::zero(); channels], &[channels]),
            running_mean: store
                .register_buffer(format!("{name}.running_mean"), vec![S::zero(); channels]),
            running_var: store
                .register_buffer(format!("{name}.running_var"), vec![S::one(); channels]),
            momentum,
            eps: 1e-5,
        }
    }

    /// Training mode normalizes with per-channel statistics of this input
    /// (population variance) and folds them into the running buffers;
    /// evaluation is a fixed affine map of the running statistics.
    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        x: &Tensor<S>,
        mode: &Mode<'_>,
    ) -> Result<Tensor<S>, TensorError> {
        let gamma = store.get(self.gamma);
        let beta = store.get(self.beta);
        if mode.is_train() {
            let channels = x.shape()[0];
            let len = x.shape()[1];
            let mut mean = vec![S::zero(); channels];
            let mut var = vec![S::zero(); channels];
            for c in 0..channels {
                let row = &x.data()[c * len..(c + 1) * len];
                let m = row.iter().copied().sum::<S>() / S::of_usize(len);
                let v = row.iter().map(|&s| (s - m) * (s - m)).sum::<S>() / S::of_usize(len);
                mean[c] = m;
                var[c] = v;
            }
            let mom = S::of_f64(self.momentum);
            let keep = S::of_f64(1.0 - self.momentum);
            let mut rm = store.buffer(self.running_mean);
            let mut rv = store.buffer(self.running_var);
            for c in 0..channels {
                rm[c] = keep * rm[c] + mom * mean[c];
                rv[c] = keep * rv[c] + mom * var[c];
            }
            store.set_buffer(self.running_mean, rm);
            store.set_buffer(self.running_var, rv);
            x.batchnorm1d(&gamma, &beta, &mean, &var, self.eps, true)
        } else {
            let mean = store.buffer(self.running_mean);
            let var = store.buffer(self.running_var);
            x.batchnorm1d(&gamma, &beta, &mean, &var, self.eps, false)
        }
    }
}

pub struct LinearLayer {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearLayer {
    /// Xavier-uniform weight, zero bias.
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        let data =
            (0..d_in * d_out).map(|_| S::of_f64(rng.random_range(-bound..bound))).collect();
        Self {
            w: store.register(format!("{name}.weight"), data, &[d_in, d_out]),
            b: store.register(format!("{name}.bias"), vec![S::zero(); d_out], &[d_out]),
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        x: &Tensor<S>,
    ) -> Result<Tensor<S>, TensorError> {
        x.linear(&store.get(self.w), &store.get(self.b))
    }
}

pub struct LayerNormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNormLayer {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.register(format!("{name}.gamma"), vec![S::one(); dim], &[dim]),
            beta: store.register(format!("{name}.beta"), vec![S::zero(); dim], &[dim]),
            eps: 1e-5,
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        store: &ParamStore<S>,
        x: &Tensor<S>,
    ) -> Result<Tensor<S>, TensorError> {
        x.layer_norm(&store.get(self.gamma), &store.get(self.beta), self.eps)
    }
}
