//! Dense f64 tensors with tape-based reverse-mode automatic differentiation.
//!
//! Everything numeric in the crate flows through [`Tensor`]: node features,
//! adjacency matrices, model parameters, logits, and losses. Tensors are
//! immutable once created except for their gradient buffer; an op executed
//! while a [`Tape`] is active records a backward rule, and [`backward`]
//! replays the tape in reverse to accumulate gradients into every tensor that
//! requires them.
//!
//! Storage is row-major and dense throughout. Graphs in scope are small
//! (hundreds of nodes), so dense `n x n` adjacency work is affordable and
//! keeps the kernels trivial to audit.

mod kernels;
mod ops;
mod optim;
mod param;
mod tape;

pub use ops::{op_forward, OpKind};
pub use optim::{adam_step, AdamState, LrSchedule};
pub use param::{Param, ParamSet};
pub use tape::{backward, Tape};

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

/// Errors produced by tensor construction, ops, backward, and the optimizer.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {shape:?}")]
    InvalidShape {
        op: &'static str,
        expected: &'static str,
        shape: Vec<usize>,
    },
    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: &'static str,
        got: usize,
    },
    #[error("values length {len} does not match shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("loss does not lie on the active tape")]
    LossNotOnTape,
    #[error("no active tape")]
    NoActiveTape,
    #[error("a tape is already active on this thread")]
    TapeAlreadyActive,
    #[error("parameter '{name}' has no gradient")]
    MissingGrad { name: String },
    #[error("parameter '{name}': moment buffer shape does not match parameter")]
    MomentMismatch { name: String },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("{op}: {msg}")]
    Unsupported { op: &'static str, msg: String },
}

/// Identifies a recorded op: the tape generation plus the node index.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) struct NodeRef {
    pub tape: u64,
    pub index: usize,
}

pub(crate) struct Inner {
    shape: Vec<usize>,
    values: Vec<f64>,
    /// Persistent, user-visible gradient; accumulates across backward passes.
    grad: RefCell<Option<Vec<f64>>>,
    /// Pass-local upstream gradient, consumed by the tensor's own tape node.
    flow: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    node: Cell<Option<NodeRef>>,
}

impl Inner {
    fn accumulate_into(slot: &RefCell<Option<Vec<f64>>>, len: usize, delta: &[f64]) {
        debug_assert_eq!(delta.len(), len);
        let mut slot = slot.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Adds `delta` into the persistent grad buffer.
    pub(crate) fn accumulate(&self, delta: &[f64]) {
        Self::accumulate_into(&self.grad, self.values.len(), delta);
    }

    /// Adds `delta` into the pass-local flow buffer.
    pub(crate) fn accumulate_flow(&self, delta: &[f64]) {
        Self::accumulate_into(&self.flow, self.values.len(), delta);
    }

    /// True when this tensor is the output of a node on the currently active
    /// tape (whose node will consume its flow during the reverse pass).
    fn on_active_tape(&self) -> bool {
        self.node
            .get()
            .is_some_and(|n| tape::current_gen() == Some(n.tape))
    }

    /// Routes a backward contribution: tensors produced on the active tape
    /// receive flow (their own node persists it later); leaves go straight to
    /// the persistent grad buffer.
    pub(crate) fn route_accumulate(&self, delta: &[f64]) {
        if self.on_active_tape() {
            self.accumulate_flow(delta);
        } else {
            self.accumulate(delta);
        }
    }

    /// Like [`route_accumulate`], but hands out the target buffer directly so
    /// kernels can accumulate without a temporary.
    pub(crate) fn with_route_buf(&self, f: impl FnOnce(&mut [f64])) {
        let slot = if self.on_active_tape() {
            &self.flow
        } else {
            &self.grad
        };
        let mut slot = slot.borrow_mut();
        let buf = slot.get_or_insert_with(|| vec![0.0; self.values.len()]);
        f(buf);
    }

    /// Takes the pass-local flow (used by the tensor's own node).
    pub(crate) fn take_flow(&self) -> Option<Vec<f64>> {
        self.flow.borrow_mut().take()
    }
}

/// A dense n-dimensional array of f64 with optional gradient tracking.
///
/// Cloning is cheap (reference-counted); the underlying values never change
/// after construction. `Tensor` is deliberately not `Send`: a tape and the
/// tensors recorded on it are confined to one worker thread.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl Tensor {
    fn from_parts(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Tensor {
            inner: Rc::new(Inner {
                shape,
                values,
                grad: RefCell::new(None),
                flow: RefCell::new(None),
                requires_grad,
                node: Cell::new(None),
            }),
        }
    }

    /// Constant (non-trainable) tensor from a flat row-major buffer.
    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                len: values.len(),
            });
        }
        Ok(Self::from_parts(shape.to_vec(), values, false))
    }

    /// Trainable leaf tensor (gradients will be accumulated into it).
    pub fn param(shape: &[usize], values: Vec<f64>) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                len: values.len(),
            });
        }
        Ok(Self::from_parts(shape.to_vec(), values, true))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![0.0; n], false)
    }

    pub fn ones(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![1.0; n], false)
    }

    /// Rank-0 scalar.
    pub fn scalar(v: f64) -> Self {
        Self::from_parts(vec![], vec![v], false)
    }

    /// n x n identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        Self::from_parts(vec![n, n], v, false)
    }

    /// Rank-2 tensor from rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(m * n);
        for r in rows {
            if r.len() != n {
                return Err(TensorError::InvalidShape {
                    op: "from_rows",
                    expected: "rows of equal length",
                    shape: vec![m, r.len()],
                });
            }
            values.extend_from_slice(r);
        }
        Ok(Self::from_parts(vec![m, n], values, false))
    }

    /// A leaf copy of this tensor carrying the same values but detached from
    /// any tape, with `requires_grad = false`.
    pub fn detached(&self) -> Self {
        Self::from_parts(self.inner.shape.clone(), self.inner.values.clone(), false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.inner.values
    }

    pub fn numel(&self) -> usize {
        self.inner.values.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Snapshot of the gradient buffer, if populated.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    /// Clears the gradient buffer.
    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
        *self.inner.flow.borrow_mut() = None;
    }

    /// The single value of a rank-0/numel-1 tensor.
    pub fn item(&self) -> Result<f64, TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.shape().to_vec(),
            });
        }
        Ok(self.inner.values[0])
    }

    pub fn is_finite(&self) -> bool {
        self.inner.values.iter().all(|v| v.is_finite())
    }

    /// True when both tensors hold bit-identical values (and shapes).
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
            && self
                .values()
                .iter()
                .zip(other.values())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub(crate) fn rows(&self) -> usize {
        self.inner.shape[0]
    }

    pub(crate) fn cols(&self) -> usize {
        self.inner.shape[1]
    }

    pub(crate) fn is_rank2(&self) -> bool {
        self.inner.shape.len() == 2
    }

    pub(crate) fn inner(&self) -> &Rc<Inner> {
        &self.inner
    }

    pub(crate) fn node(&self) -> Option<NodeRef> {
        self.inner.node.get()
    }

    pub(crate) fn set_node(&self, node: NodeRef) {
        self.inner.node.set(Some(node));
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field("values", &self.inner.values)
            .finish()
    }
}
