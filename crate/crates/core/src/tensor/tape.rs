use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a backward rule sees: the upstream gradient, the forward output and
/// the forward inputs, plus which inputs actually want a gradient.
pub struct BackwardCtx<'a, T> {
    pub grad: &'a [T],
    pub output: &'a Tensor<T>,
    inputs: Vec<&'a Tensor<T>>,
    needs: Vec<bool>,
}

impl<'a, T> BackwardCtx<'a, T> {
    pub fn input(&self, i: usize) -> &'a Tensor<T> {
        self.inputs[i]
    }

    pub fn needs(&self, i: usize) -> bool {
        self.needs[i]
    }
}

/// Returns one optional gradient per input, in input order.
type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>>>;

struct Node<T> {
    value: Tensor<T>,
    inputs: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    leaf: bool,
}

/// Define-by-run operation record.
///
/// Nodes are appended in execution order, so every operation's inputs
/// precede it; [`Tape::backward`] walks the record in exact reverse.
/// Gradients accumulate (`+=`) into leaf tensors until
/// [`Tape::zero_grad`] is called.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor. It collects a gradient iff
    /// `requires_grad` is set on it.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        self.nodes.push(Node { value: tensor, inputs: Vec::new(), backward: None, leaf: true });
        Var(self.nodes.len() - 1)
    }

    /// Registers a tensor that never collects a gradient.
    pub fn constant(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.set_requires_grad(false);
        self.leaf(tensor)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    /// Appends an operation result. The backward rule is kept only when at
    /// least one input needs a gradient, so inference records no closures.
    pub fn record<F>(&mut self, mut value: Tensor<T>, inputs: &[Var], backward: F) -> Var
    where
        F: Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> + 'static,
    {
        let needs = inputs.iter().any(|v| self.nodes[v.0].value.requires_grad());
        value.set_requires_grad(needs);
        value.clear_grad();
        let backward: Option<BackwardFn<T>> = if needs { Some(Box::new(backward)) } else { None };
        self.nodes.push(Node { value, inputs: inputs.iter().map(|v| v.0).collect(), backward, leaf: false });
        Var(self.nodes.len() - 1)
    }

    /// Resets every leaf gradient to zero.
    pub fn zero_grad(&mut self) {
        for node in self.nodes.iter_mut().filter(|n| n.leaf) {
            node.value.zero_grad();
        }
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Leaves reachable from `loss` get their adjoint added to their
    /// gradient; every other `requires_grad` leaf ends up with a zero
    /// gradient buffer.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_node = &self.nodes[loss.0].value;
        if loss_node.numel() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", loss_node.shape())));
        }
        let mut adjoint: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        adjoint[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adjoint[i].take() else { continue };
            if self.nodes[i].leaf {
                if self.nodes[i].value.requires_grad() {
                    self.nodes[i].value.accumulate_grad(&g);
                }
                continue;
            }
            let node = &self.nodes[i];
            let Some(rule) = node.backward.as_ref() else { continue };
            let ctx = BackwardCtx {
                grad: &g,
                output: &node.value,
                inputs: node.inputs.iter().map(|&j| &self.nodes[j].value).collect(),
                needs: node.inputs.iter().map(|&j| self.nodes[j].value.requires_grad()).collect(),
            };
            let grads = rule(&ctx);
            debug_assert_eq!(grads.len(), node.inputs.len());
            for (slot, (&j, gi)) in node.inputs.iter().zip(grads).enumerate() {
                let Some(gi) = gi else { continue };
                if !ctx.needs(slot) {
                    continue;
                }
                debug_assert_eq!(gi.len(), self.nodes[j].value.numel());
                match adjoint[j].as_mut() {
                    Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a += *b),
                    None => adjoint[j] = Some(gi),
                }
            }
        }

        for node in self.nodes.iter_mut().filter(|n| n.leaf && n.value.requires_grad()) {
            node.value.ensure_grad();
        }
        Ok(())
    }
}
