//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] owns a tape of op records in creation order, which is a
//! topological order by construction. [`Var`] is a cheap handle to a value on
//! a graph; values are immutable once recorded. An inference graph records
//! nothing, so intermediates are freed as soon as their handles drop.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::tensor::{precision, Tensor};

/// Computes input gradients from the output gradient. The mask says which
/// inputs are tracked; untracked slots may be returned as `None`.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Result<Vec<Option<Tensor>>>>;

struct Node {
    op: &'static str,
    parents: Vec<Option<usize>>,
    backward: Option<BackwardFn>,
}

struct Tape {
    nodes: Vec<Node>,
    recording: bool,
    consumed: bool,
}

#[derive(Clone)]
pub struct Graph {
    tape: Rc<RefCell<Tape>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// A graph that records ops for a single backward pass.
    pub fn new() -> Self {
        Self::with_recording(true)
    }

    /// A graph that records nothing; every value is a constant.
    pub fn inference() -> Self {
        Self::with_recording(false)
    }

    fn with_recording(recording: bool) -> Self {
        Graph {
            tape: Rc::new(RefCell::new(Tape { nodes: Vec::new(), recording, consumed: false })),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.tape.borrow().recording
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.tape.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input. On an inference graph this is a constant.
    pub fn leaf(&self, mut value: Tensor) -> Var {
        precision().round_slice(value.data_mut());
        let id = {
            let mut tape = self.tape.borrow_mut();
            if tape.recording {
                tape.nodes.push(Node { op: "leaf", parents: Vec::new(), backward: None });
                Some(tape.nodes.len() - 1)
            } else {
                None
            }
        };
        Var { value: Rc::new(value), id, graph: self.clone() }
    }

    pub fn constant(&self, mut value: Tensor) -> Var {
        precision().round_slice(value.data_mut());
        Var { value: Rc::new(value), id: None, graph: self.clone() }
    }

    /// Record an op output. Rejects non-finite results and rounds to the
    /// thread precision before the value becomes visible.
    pub(crate) fn record(
        &self,
        op: &'static str,
        mut value: Tensor,
        inputs: &[&Var],
        backward: impl Fn(&Tensor, &[bool]) -> Result<Vec<Option<Tensor>>> + 'static,
    ) -> Result<Var> {
        for v in inputs {
            if !Rc::ptr_eq(&v.graph.tape, &self.tape) {
                return Err(TensorError::GraphMismatch);
            }
        }
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op });
        }
        precision().round_slice(value.data_mut());
        let tracked = inputs.iter().any(|v| v.id.is_some());
        let id = {
            let mut tape = self.tape.borrow_mut();
            if tape.recording && tracked {
                tape.nodes.push(Node {
                    op,
                    parents: inputs.iter().map(|v| v.id).collect(),
                    backward: Some(Box::new(backward)),
                });
                Some(tape.nodes.len() - 1)
            } else {
                None
            }
        };
        Ok(Var { value: Rc::new(value), id, graph: self.clone() })
    }

    /// Propagate d(root)/d(node) to every tracked node. Each node is visited
    /// once, in reverse creation order. A graph supports one backward pass.
    pub fn backward(&self, root: &Var) -> Result<Gradients> {
        if !Rc::ptr_eq(&root.graph.tape, &self.tape) {
            return Err(TensorError::GraphMismatch);
        }
        let root_id = match root.id {
            Some(id) if root.value.numel() == 1 => id,
            _ => return Err(TensorError::NotScalar(root.value.shape().to_vec())),
        };
        let mut tape = self.tape.borrow_mut();
        if tape.consumed {
            return Err(TensorError::BackwardTwice);
        }
        tape.consumed = true;

        let n = tape.nodes.len();
        let mut pending: Vec<Option<Tensor>> = vec![None; n];
        let mut done: Vec<Option<Tensor>> = vec![None; n];
        pending[root_id] = Some(Tensor::ones(root.value.shape()));

        for id in (0..=root_id).rev() {
            let Some(grad) = pending[id].take() else { continue };
            let node = &tape.nodes[id];
            if let Some(bw) = &node.backward {
                let mask: Vec<bool> = node.parents.iter().map(Option::is_some).collect();
                let input_grads = bw(&grad, &mask)?;
                for (parent, g) in node.parents.iter().zip(input_grads) {
                    if let (Some(pid), Some(g)) = (parent, g) {
                        match &mut pending[*pid] {
                            Some(acc) => {
                                debug_assert_eq!(acc.shape(), g.shape(), "grad shape in {}", node.op);
                                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                                    *a += b;
                                }
                            }
                            slot @ None => *slot = Some(g),
                        }
                    }
                }
            }
            done[id] = Some(grad);
        }
        // Release closures (and the values they captured).
        for node in tape.nodes.iter_mut() {
            node.backward = None;
        }
        Ok(Gradients { grads: done })
    }
}

/// Gradients produced by one backward pass, keyed by variable.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; `None` if `v` is untracked
    /// or not upstream of the root.
    pub fn get(&self, v: &Var) -> Option<&Tensor> {
        v.id.and_then(|id| self.grads.get(id)).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get) but materializes zeros for unreachable inputs.
    pub fn get_or_zeros(&self, v: &Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(v.shape()))
    }
}

/// Handle to a value on a [`Graph`].
#[derive(Clone)]
pub struct Var {
    value: Rc<Tensor>,
    id: Option<usize>,
    graph: Graph,
}

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub(crate) fn value_rc(&self) -> Rc<Tensor> {
        Rc::clone(&self.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn rank(&self) -> usize {
        self.value.rank()
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// True when gradients will flow to this value.
    pub fn requires_grad(&self) -> bool {
        self.id.is_some()
    }

    /// Same value, cut from the tape.
    pub fn detach(&self) -> Var {
        Var { value: Rc::clone(&self.value), id: None, graph: self.graph.clone() }
    }

    /// Scalar value of a single-element var.
    pub fn item(&self) -> f64 {
        self.value.item()
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(id={:?}, {:?})", self.id, self.value)
    }
}
