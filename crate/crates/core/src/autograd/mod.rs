//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every differentiable operation applied to variables
//! that require gradients. Nodes are appended in evaluation order, so a
//! reverse sweep over node ids is a valid topological order for the
//! backward pass. With gradients disabled nothing is recorded and
//! intermediate values are freed as soon as their [`Var`] handles drop.

pub mod gradcheck;
mod ops;

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    inputs: Vec<Option<usize>>,
    backward: Option<BackwardFn<T>>,
}

/// A value on a tape. Cloning is cheap.
#[derive(Clone)]
pub struct Var<T> {
    value: Rc<Tensor<T>>,
    node: Option<usize>,
}

impl<T: Float> Var<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub fn id(&self) -> Option<usize> {
        self.node
    }

    /// The scalar held by a single-element variable.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.value.numel(), 1);
        self.value.data()[0]
    }

    pub(crate) fn rc(&self) -> Rc<Tensor<T>> {
        Rc::clone(&self.value)
    }
}

impl<T: Float> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({:?}, node={:?})", self.value, self.node)
    }
}

pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    grad_enabled: bool,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: true,
        }
    }

    /// A tape that records nothing; every variable is a constant.
    pub fn no_grad() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: false,
        }
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

    /// A variable that gradients are computed for.
    pub fn leaf(&self, value: Tensor<T>) -> Var<T> {
        if !self.grad_enabled {
            return self.constant(value);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            inputs: Vec::new(),
            backward: None,
        });
        Var {
            value: Rc::new(value),
            node: Some(nodes.len() - 1),
        }
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<T> {
        Var {
            value: Rc::new(value),
            node: None,
        }
    }

    /// Same value, cut from the gradient path.
    pub fn detach(&self, x: &Var<T>) -> Var<T> {
        Var {
            value: x.rc(),
            node: None,
        }
    }

    pub(crate) fn record(
        &self,
        value: Tensor<T>,
        inputs: &[&Var<T>],
        backward: impl Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<T> {
        if !self.grad_enabled || inputs.iter().all(|v| v.node.is_none()) {
            return self.constant(value);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            inputs: inputs.iter().map(|v| v.node).collect(),
            backward: Some(Box::new(backward)),
        });
        Var {
            value: Rc::new(value),
            node: Some(nodes.len() - 1),
        }
    }

    /// Back-propagates from a single-element `root`.
    pub fn backward(&self, root: &Var<T>) -> Result<Gradients<T>> {
        if root.value.numel() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar root, got {:?}",
                root.shape()
            )));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(nodes.len(), || None);
        let Some(root_id) = root.node else {
            return Ok(Gradients { grads });
        };
        grads[root_id] = Some(Tensor::full(root.shape(), T::one()));
        for id in (0..=root_id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let need: Vec<bool> = node.inputs.iter().map(Option::is_some).collect();
            let input_grads = backward(&g, &need);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (input, ig) in node.inputs.iter().zip(input_grads) {
                if let (Some(iid), Some(ig)) = (input, ig) {
                    match &mut grads[*iid] {
                        Some(acc) => acc.add_assign(&ig),
                        slot @ None => *slot = Some(ig),
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of leaf variables after [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Float> Gradients<T> {
    /// Gradient of `var`, or `None` if it does not influence the root.
    pub fn get(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        var.node.and_then(|id| self.grads.get(id)?.as_ref())
    }

    /// Gradient of `var`, zeros when it does not influence the root.
    pub fn get_or_zeros(&self, var: &Var<T>) -> Tensor<T> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}
