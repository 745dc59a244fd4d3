//! Reverse-mode automatic differentiation over `ndarray` values.
//!
//! A [`Tape`] records one backward closure per operation. [`Var`] handles own
//! their value through an `Rc`, so in inference mode (or for constants) nothing
//! is retained beyond what the caller keeps alive.

mod linalg;
mod loss;
mod lstm;
mod ops;

#[cfg(test)]
pub(crate) mod gradcheck;

pub use linalg::{col2im, im2col, ConvGeom};

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};
use nsx_core::Real;

type Backward<T> = Box<dyn Fn(&ArrayD<T>, &mut GradSink<T>)>;

/// A value on the tape.
#[derive(Clone)]
pub struct Var<T> {
    id: usize,
    value: Rc<ArrayD<T>>,
    tracked: bool,
}

impl<T: Real> Var<T> {
    pub fn value(&self) -> &ArrayD<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// Whether gradients flow back through this value.
    pub fn tracked(&self) -> bool {
        self.tracked
    }

    /// Tape index to send gradients to, if any.
    pub(crate) fn slot(&self) -> Option<usize> {
        self.tracked.then_some(self.id)
    }

    /// The single element of a scalar.
    pub fn item(&self) -> T {
        assert_eq!(self.value.len(), 1, "item() on a non-scalar of shape {:?}", self.shape());
        *self.value.iter().next().expect("nonempty")
    }
}

impl<T: Real> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).field("tracked", &self.tracked).finish()
    }
}

/// Accumulates gradients by tape slot.
pub struct GradSink<T> {
    grads: Vec<Option<ArrayD<T>>>,
}

impl<T: Real> GradSink<T> {
    pub(crate) fn add(&mut self, slot: usize, grad: ArrayD<T>) {
        match &mut self.grads[slot] {
            Some(acc) => *acc += &grad,
            empty => *empty = Some(grad),
        }
    }

    pub(crate) fn add_opt(&mut self, slot: Option<usize>, grad: impl FnOnce() -> ArrayD<T>) {
        if let Some(s) = slot {
            self.add(s, grad());
        }
    }
}

/// Gradients of a scalar with respect to every tracked leaf.
pub struct Gradients<T> {
    grads: Vec<Option<ArrayD<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of `var`; zeros when it did not influence the output.
    pub fn wrt(&self, var: &Var<T>) -> ArrayD<T> {
        self.grads
            .get(var.id)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| ArrayD::zeros(IxDyn(var.shape())))
    }

    pub fn take(&mut self, var: &Var<T>) -> ArrayD<T> {
        self.grads
            .get_mut(var.id)
            .and_then(Option::take)
            .unwrap_or_else(|| ArrayD::zeros(IxDyn(var.shape())))
    }
}

pub struct Tape<T> {
    nodes: RefCell<Vec<Option<Backward<T>>>>,
    grad_enabled: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), grad_enabled: true }
    }

    /// A tape that records nothing; every result is untracked.
    pub fn inference() -> Self {
        Self { nodes: RefCell::new(Vec::new()), grad_enabled: false }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn alloc(&self, backward: Option<Backward<T>>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(backward);
        nodes.len() - 1
    }

    /// A differentiable input (parameter).
    pub fn leaf(&self, value: ArrayD<T>) -> Var<T> {
        let id = self.alloc(None);
        Var { id, value: Rc::new(value), tracked: self.grad_enabled }
    }

    /// A value that never receives gradients.
    pub fn constant(&self, value: ArrayD<T>) -> Var<T> {
        let id = self.alloc(None);
        Var { id, value: Rc::new(value), tracked: false }
    }

    /// Records an operation result. `backward` is kept only when some input is tracked.
    pub(crate) fn record(
        &self,
        value: ArrayD<T>,
        inputs: &[&Var<T>],
        backward: impl Fn(&ArrayD<T>, &mut GradSink<T>) + 'static,
    ) -> Var<T> {
        let tracked = self.grad_enabled && inputs.iter().any(|v| v.tracked);
        let id = self.alloc(if tracked { Some(Box::new(backward)) } else { None });
        Var { id, value: Rc::new(value), tracked }
    }

    /// Back-propagates from a scalar `root`.
    pub fn backward(&self, root: &Var<T>) -> Gradients<T> {
        assert_eq!(root.value.len(), 1, "backward needs a scalar root, got {:?}", root.shape());
        let nodes = self.nodes.borrow();
        let mut sink = GradSink { grads: (0..nodes.len()).map(|_| None).collect() };
        if !root.tracked {
            return Gradients { grads: sink.grads };
        }
        sink.grads[root.id] = Some(ArrayD::from_elem(IxDyn(root.shape()), T::one()));
        for id in (0..=root.id).rev() {
            let Some(back) = &nodes[id] else { continue };
            // interior gradients are released once propagated
            if let Some(g) = sink.grads[id].take() {
                back(&g, &mut sink);
            }
        }
        Gradients { grads: sink.grads }
    }
}
