//! AdamW with decoupled weight decay.

use crate::num::Scalar;
use crate::tensor::store::ParamStore;
use crate::tensor::TensorError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1.1e-4, weight_decay: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates per trainable parameter, in registration
/// order, plus the step counter used for bias correction.
pub struct AdamWState<S: Scalar> {
    step: u64,
    moments: Vec<(Vec<S>, Vec<S>)>,
}

impl<S: Scalar> AdamWState<S> {
    pub fn new(store: &ParamStore<S>) -> Self {
        let moments = store
            .trainable_ids()
            .iter()
            .map(|&id| {
                let n = store.get(id).numel();
                (vec![S::zero(); n], vec![S::zero(); n])
            })
            .collect();
        Self { step: 0, moments }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One optimizer step. Weight decay is decoupled: every trainable parameter
/// is shrunk by `lr * weight_decay` independently of the gradient-driven
/// moment update. Parameters without an accumulated gradient see a zero
/// gradient. Accumulated gradients are consumed.
pub fn adamw_step<S: Scalar>(
    store: &mut ParamStore<S>,
    state: &mut AdamWState<S>,
    cfg: &AdamWConfig,
) -> Result<(), TensorError> {
    let ids = store.trainable_ids();
    assert_eq!(ids.len(), state.moments.len(), "optimizer state does not match store");
    state.step += 1;
    let t = state.step as i32;
    let bias1 = S::of_f64(1.0 - cfg.beta1.powi(t));
    let bias2 = S::of_f64(1.0 - cfg.beta2.powi(t));
    let beta1 = S::of_f64(cfg.beta1);
    let beta2 = S::of_f64(cfg.beta2);
    let one_m_beta1 = S::of_f64(1.0 - cfg.beta1);
    let one_m_beta2 = S::of_f64(1.0 - cfg.beta2);
    let lr = S::of_f64(cfg.lr);
    let eps = S::of_f64(cfg.eps);
    let decay = S::of_f64(1.0 - cfg.lr * cfg.weight_decay);

    for (idx, &id) in ids.iter().enumerate() {
        let tensor = store.get(id);
        let grad = tensor.take_grad();
        if let Some(g) = &grad {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFiniteGradient(store.name(id).to_string()));
            }
        }
        let (m, v) = &mut state.moments[idx];
        let mut data = tensor.data().to_vec();
        for i in 0..data.len() {
            let g = grad.as_ref().map_or(S::zero(), |g| g[i]);
            m[i] = beta1 * m[i] + one_m_beta1 * g;
            v[i] = beta2 * v[i] + one_m_beta2 * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            data[i] = data[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
        store.set_data(id, data);
    }
    Ok(())
}
