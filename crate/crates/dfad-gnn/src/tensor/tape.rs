//! The computation tape and the reverse pass.
//!
//! A [`Tape`] is an RAII guard: while it is alive, every op whose inputs
//! require gradients pushes a backward closure onto a thread-local node list.
//! [`backward`] seeds the loss gradient with 1.0 and runs the closures in
//! reverse recording order, which is a valid reverse-topological order
//! because an op's inputs always exist before its output.
//!
//! Gradients accumulate: if a tensor already has a grad buffer, new
//! contributions are added to it. Zeroing happens when the optimizer replaces
//! a parameter (the fresh tensor starts without a grad buffer).

use std::cell::RefCell;
use std::marker::PhantomData;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{NodeRef, Tensor, TensorError};

static TAPE_GEN: AtomicU64 = AtomicU64::new(1);

struct ActiveTape {
    gen: u64,
    nodes: Vec<Box<dyn Fn()>>,
}

thread_local! {
    static ACTIVE: RefCell<Option<ActiveTape>> = const { RefCell::new(None) };
}

/// Guard for the thread's single active tape. Dropping it discards all
/// recorded nodes (and with them the retained intermediate tensors).
pub struct Tape {
    gen: u64,
    // Tapes must stay on the thread that created them.
    _not_send: PhantomData<*const ()>,
}

impl Tape {
    /// Activates a fresh tape on this thread.
    ///
    /// Exactly one tape may be active per training step; nesting is an error.
    pub fn new() -> Result<Tape, TensorError> {
        ACTIVE.with(|slot| {
            let mut slot = slot.borrow_mut();
            if slot.is_some() {
                return Err(TensorError::TapeAlreadyActive);
            }
            let gen = TAPE_GEN.fetch_add(1, Ordering::Relaxed);
            *slot = Some(ActiveTape {
                gen,
                nodes: Vec::new(),
            });
            Ok(Tape {
                gen,
                _not_send: PhantomData,
            })
        })
    }

    /// Number of ops recorded so far.
    pub fn len(&self) -> usize {
        ACTIVE.with(|slot| slot.borrow().as_ref().map_or(0, |t| t.nodes.len()))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Drop for Tape {
    fn drop(&mut self) {
        ACTIVE.with(|slot| {
            let mut slot = slot.borrow_mut();
            if slot.as_ref().is_some_and(|t| t.gen == self.gen) {
                *slot = None;
            }
        });
    }
}

pub(crate) fn tape_active() -> bool {
    ACTIVE.with(|slot| slot.borrow().is_some())
}

pub(crate) fn current_gen() -> Option<u64> {
    ACTIVE.with(|slot| slot.borrow().as_ref().map(|t| t.gen))
}

/// Records a backward closure for `output` on the active tape, if any.
pub(crate) fn record(output: &Tensor, backward_rule: Box<dyn Fn()>) {
    ACTIVE.with(|slot| {
        let mut slot = slot.borrow_mut();
        if let Some(tape) = slot.as_mut() {
            let index = tape.nodes.len();
            tape.nodes.push(backward_rule);
            output.set_node(NodeRef {
                tape: tape.gen,
                index,
            });
        }
    });
}

/// Runs the reverse pass from a scalar loss recorded on the active tape.
///
/// Every tensor with `requires_grad` that contributed to the loss ends up
/// with a populated grad buffer; existing buffers receive additive
/// contributions.
pub fn backward(loss: &Tensor) -> Result<(), TensorError> {
    if loss.numel() != 1 {
        return Err(TensorError::NonScalarLoss {
            shape: loss.shape().to_vec(),
        });
    }
    ACTIVE.with(|slot| {
        let slot = slot.borrow();
        let tape = slot.as_ref().ok_or(TensorError::NoActiveTape)?;
        match loss.node() {
            Some(node) if node.tape == tape.gen => {}
            _ => return Err(TensorError::LossNotOnTape),
        }
        loss.inner().accumulate_flow(&[1.0]);
        for node in tape.nodes.iter().rev() {
            node();
        }
        Ok(())
    })
}
