//! Named parameter registry shared by the model, the optimizer and the
//! checkpoint format.

use std::sync::Mutex;

use crate::num::Scalar;
use crate::tensor::Tensor;

/// Handle to a registered parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Handle to a registered non-trainable buffer (e.g. running statistics).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferId(pub(crate) usize);

struct ParamEntry<S: Scalar> {
    name: String,
    tensor: Tensor<S>,
    trainable: bool,
}

struct BufferEntry<S: Scalar> {
    name: String,
    // interior mutability: batch-norm updates running stats during a
    // training forward pass that otherwise only reads the store
    values: Mutex<Vec<S>>,
}

/// Ordered collection of named parameters and buffers. Registration order is
/// the canonical order for optimizer state and checkpoints.
pub struct ParamStore<S: Scalar> {
    params: Vec<ParamEntry<S>>,
    buffers: Vec<BufferEntry<S>>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { params: Vec::new(), buffers: Vec::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, data: Vec<S>, shape: &[usize]) -> ParamId {
        self.register_tensor(name, Tensor::param(data, shape))
    }

    /// Registers an existing tensor (it should require gradients); gradient
    /// checking uses this to wire probe tensors straight into a model.
    pub fn register_tensor(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.params.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.params.push(ParamEntry { name, tensor, trainable: true });
        ParamId(self.params.len() - 1)
    }

    pub fn register_buffer(&mut self, name: impl Into<String>, values: Vec<S>) -> BufferId {
        self.buffers.push(BufferEntry { name: name.into(), values: Mutex::new(values) });
        BufferId(self.buffers.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> Tensor<S> {
        self.params[id.0].tensor.clone()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn buffer(&self, id: BufferId) -> Vec<S> {
        self.buffers[id.0].values.lock().expect("buffer lock").clone()
    }

    pub fn set_buffer(&self, id: BufferId, values: Vec<S>) {
        *self.buffers[id.0].values.lock().expect("buffer lock") = values;
    }

    /// Replaces a parameter's values with a fresh leaf tensor (the optimizer
    /// path). Gradient state is discarded.
    pub fn set_data(&mut self, id: ParamId, data: Vec<S>) {
        let shape = self.params[id.0].tensor.shape().to_vec();
        debug_assert_eq!(data.len(), self.params[id.0].tensor.numel());
        self.params[id.0].tensor = Tensor::param(data, &shape);
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalar values.
    pub fn trainable_values(&self) -> usize {
        self.params.iter().filter(|e| e.trainable).map(|e| e.tensor.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>, bool)> {
        self.params.iter().map(|e| (e.name.as_str(), &e.tensor, e.trainable))
    }

    pub(crate) fn trainable_ids(&self) -> Vec<ParamId> {
        (0..self.params.len()).filter(|&i| self.params[i].trainable).map(ParamId).collect()
    }

    pub fn buffer_iter(&self) -> impl Iterator<Item = (&str, Vec<S>)> {
        self.buffers.iter().map(|e| (e.name.as_str(), e.values.lock().expect("buffer lock").clone()))
    }

    pub fn zero_grads(&self) {
        for e in &self.params {
            e.tensor.zero_grad();
        }
    }

    /// Looks a parameter up by name (checkpoint loading).
    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn find_buffer(&self, name: &str) -> Option<BufferId> {
        self.buffers.iter().position(|e| e.name == name).map(BufferId)
    }
}
