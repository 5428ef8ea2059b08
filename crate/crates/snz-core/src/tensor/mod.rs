//! Dense-tensor engine with reverse-mode automatic differentiation covering
//! exactly the operator set the sequence model needs.
//!
//! Tensors are immutable once created; each operator records its parents and
//! a backward rule, and [`backward`](Tensor::backward) replays the graph in
//! reverse creation order, accumulating gradients into every reachable
//! parameter. Graph recording is skipped entirely when no input requires
//! gradients, so inference carries no tape overhead.

mod gradcheck;
mod ops;
mod optim;
mod store;

pub use gradcheck::{central_diff_check, central_diff_check_sampled, GradCheckReport};
pub use ops::{concat, LOG_FLOOR};
pub use optim::{adamw_step, AdamWConfig, AdamWState};
pub use store::{BufferId, ParamId, ParamStore};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::num::Scalar;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("invalid backward root: expected scalar, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),
    #[error("no gradient path: root does not require gradients")]
    NoGradPath,
    #[error("non-finite gradient in parameter '{0}'")]
    NonFiniteGradient(String),
    #[error("invalid operation: {0}")]
    Invalid(String),
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static NO_GRAD_DEPTH: std::cell::Cell<u32> = const { std::cell::Cell::new(0) };
}

/// Runs `f` with graph recording disabled on this thread: every operator
/// output becomes a constant leaf regardless of its inputs. Inference paths
/// use this to avoid building tapes from parameters.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    NO_GRAD_DEPTH.with(|d| d.set(d.get() + 1));
    let out = f();
    NO_GRAD_DEPTH.with(|d| d.set(d.get() - 1));
    out
}

fn grad_enabled() -> bool {
    NO_GRAD_DEPTH.with(|d| d.get()) == 0
}

pub(crate) struct Node<S: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<S>>>,
    parents: Vec<Tensor<S>>,
    backward: Option<Box<dyn BackwardOp<S>>>,
}

/// Gradient rule of one recorded operator.
pub(crate) trait BackwardOp<S: Scalar>: Send + Sync {
    /// Gradients w.r.t. each parent given the output gradient. A `None` slot
    /// is allowed (and expected) wherever `needs[i]` is false.
    fn backward(
        &self,
        out_data: &[S],
        parents: &[Tensor<S>],
        grad_out: &[S],
        needs: &[bool],
    ) -> Vec<Option<Vec<S>>>;
}

/// Dense tensor handle; cloning shares the underlying node.
pub struct Tensor<S: Scalar> {
    node: Arc<Node<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Self { node: Arc::clone(&self.node) }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

impl<S: Scalar> Tensor<S> {
    fn make(
        shape: Vec<usize>,
        data: Vec<S>,
        requires_grad: bool,
        parents: Vec<Tensor<S>>,
        backward: Option<Box<dyn BackwardOp<S>>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                parents,
                backward,
            }),
        }
    }

    /// Constant tensor that never tracks gradients.
    pub fn leaf(data: Vec<S>, shape: &[usize]) -> Self {
        Self::make(shape.to_vec(), data, false, Vec::new(), None)
    }

    /// Trainable leaf tensor.
    pub fn param(data: Vec<S>, shape: &[usize]) -> Self {
        Self::make(shape.to_vec(), data, true, Vec::new(), None)
    }

    /// Records an operator output. When no parent tracks gradients, or a
    /// [`no_grad`] scope is active, the graph edges are dropped so inference
    /// never accumulates a tape.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<S>,
        parents: Vec<Tensor<S>>,
        backward: Box<dyn BackwardOp<S>>,
    ) -> Self {
        let requires = grad_enabled() && parents.iter().any(|p| p.node.requires_grad);
        if requires {
            Self::make(shape, data, true, parents, Some(backward))
        } else {
            Self::make(shape, data, false, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn data(&self) -> &[S] {
        &self.node.data
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.node.data[0]
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.node.grad.lock().expect("grad lock").clone()
    }

    /// Removes and returns the accumulated gradient.
    pub fn take_grad(&self) -> Option<Vec<S>> {
        self.node.grad.lock().expect("grad lock").take()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock") = None;
    }

    fn accumulate_grad(&self, incoming: &[S]) {
        let mut slot = self.node.grad.lock().expect("grad lock");
        match slot.as_mut() {
            Some(existing) => {
                for (e, &g) in existing.iter_mut().zip(incoming) {
                    *e += g;
                }
            }
            None => *slot = Some(incoming.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
    /// gradient-requiring leaf reachable from the root; each node is visited
    /// exactly once, in reverse creation order.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarBackward(self.node.shape.clone()));
        }
        if !self.node.requires_grad {
            return Err(TensorError::NoGradPath);
        }

        // collect the reachable gradient-requiring subgraph
        let mut nodes: std::collections::HashMap<u64, Tensor<S>> = Default::default();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !t.node.requires_grad || nodes.contains_key(&t.node.id) {
                continue;
            }
            for p in &t.node.parents {
                stack.push(p.clone());
            }
            nodes.insert(t.node.id, t);
        }
        let mut order: Vec<&Tensor<S>> = nodes.values().collect();
        order.sort_by_key(|t| std::cmp::Reverse(t.node.id));

        self.accumulate_grad(&[S::one()]);
        for t in order {
            let Some(op) = t.node.backward.as_ref() else {
                continue; // leaf keeps its gradient
            };
            let Some(grad_out) = t.take_grad() else {
                continue; // no gradient flowed here
            };
            let needs: Vec<bool> =
                t.node.parents.iter().map(|p| p.node.requires_grad).collect();
            let grads = op.backward(&t.node.data, &t.node.parents, &grad_out, &needs);
            debug_assert_eq!(grads.len(), t.node.parents.len());
            for (parent, grad) in t.node.parents.iter().zip(grads) {
                if let Some(g) = grad {
                    debug_assert_eq!(g.len(), parent.numel());
                    if parent.node.requires_grad {
                        parent.accumulate_grad(&g);
                    }
                }
            }
        }
        Ok(())
    }
}
