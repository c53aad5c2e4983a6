use std::cell::RefCell;
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::rc::Rc;

use super::ops::{activation, arith, conv, linear, norm, pool};
use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Recorded operation and whatever it saved for the backward pass.
pub(crate) enum Op<T> {
    Leaf,
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        input: usize,
        weight: usize,
        bias: usize,
    },
    BatchNorm(norm::Saved<T>),
    Unary {
        input: usize,
        kind: activation::Unary,
    },
    PowScalar {
        input: usize,
        exponent: T,
    },
    Scale {
        input: usize,
        factor: T,
    },
    AddScalar {
        input: usize,
    },
    ClampMin {
        input: usize,
        min: T,
    },
    Softmax {
        input: usize,
        axis: usize,
    },
    LogSoftmax {
        input: usize,
        axis: usize,
    },
    MaxPool {
        input: usize,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        input: usize,
    },
    Binary {
        kind: arith::Binary,
        lhs: usize,
        rhs: usize,
    },
    SumAll {
        input: usize,
    },
    SumAxis {
        input: usize,
        axis: usize,
    },
    Reshape {
        input: usize,
    },
    Stack {
        inputs: Vec<usize>,
        axis: usize,
    },
    Select {
        input: usize,
        axis: usize,
        index: usize,
    },
    GatherRows {
        input: usize,
        indices: Vec<usize>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Dense { .. } => "dense",
            Op::BatchNorm(_) => "batchnorm",
            Op::Unary { kind, .. } => kind.name(),
            Op::PowScalar { .. } => "pow_scalar",
            Op::Scale { .. } => "scale",
            Op::AddScalar { .. } => "add_scalar",
            Op::ClampMin { .. } => "clamp_min",
            Op::Softmax { .. } => "softmax",
            Op::LogSoftmax { .. } => "log_softmax",
            Op::MaxPool { .. } => "max_pool",
            Op::GlobalAvgPool { .. } => "global_avg_pool",
            Op::Binary { kind, .. } => kind.name(),
            Op::SumAll { .. } => "sum",
            Op::SumAxis { .. } => "sum_axis",
            Op::Reshape { .. } => "reshape",
            Op::Stack { .. } => "stack",
            Op::Select { .. } => "select",
            Op::GatherRows { .. } => "gather_rows",
        }
    }

    fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input, kernel, bias, ..
            } => vec![*input, *kernel, *bias],
            Op::Dense {
                input,
                weight,
                bias,
            } => vec![*input, *weight, *bias],
            Op::BatchNorm(saved) => vec![saved.input, saved.gamma, saved.beta],
            Op::Binary { lhs, rhs, .. } => vec![*lhs, *rhs],
            Op::Stack { inputs, .. } => inputs.clone(),
            Op::Unary { input, .. }
            | Op::PowScalar { input, .. }
            | Op::Scale { input, .. }
            | Op::AddScalar { input }
            | Op::ClampMin { input, .. }
            | Op::Softmax { input, .. }
            | Op::LogSoftmax { input, .. }
            | Op::MaxPool { input, .. }
            | Op::GlobalAvgPool { input }
            | Op::SumAll { input }
            | Op::SumAxis { input, .. }
            | Op::Reshape { input }
            | Op::Select { input, .. }
            | Op::GatherRows { input, .. } => vec![*input],
        }
    }
}

pub(crate) struct Node<T> {
    pub(crate) value: Rc<Tensor<T>>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Read-only view of recorded nodes handed to backward rules.
pub(crate) struct Nodes<'a, T>(&'a [Node<T>]);

impl<T> Nodes<'_, T> {
    pub(crate) fn value(&self, id: usize) -> &Tensor<T> {
        &self.0[id].value
    }

    pub(crate) fn needs_grad(&self, id: usize) -> bool {
        self.0[id].requires_grad
    }
}

/// Linear record of operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so the recording order is already a
/// topological order and `backward` walks it in reverse. A tape and its
/// variables are single-threaded; build one tape per forward pass.
pub struct Tape<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
    grads: RefCell<Vec<Option<Tensor<T>>>>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Element> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            grads: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input. Its gradient survives `backward`.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    pub(crate) fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        if cfg!(debug_assertions) && !matches!(op, Op::Leaf) && !value.all_finite() {
            let parents_finite = op.parents().iter().all(|&p| nodes[p].value.all_finite());
            assert!(
                !parents_finite,
                "{} produced a non-finite value from finite inputs",
                op.name()
            );
        }
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        self.grads.borrow_mut().push(None);
        Var { tape: self, id }
    }

    /// Record `op` whose gradient requirement is inherited from its parents.
    pub(crate) fn record(&self, value: Tensor<T>, op: Op<T>) -> Var<'_, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.parents().iter().any(|&p| nodes[p].requires_grad)
        };
        self.push(value, op, requires_grad)
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Accumulate d(root)/d(leaf) into every reachable leaf that requires a
    /// gradient. Leaf gradients are summed across calls until
    /// [`Tape::zero_grad`]; intermediate gradients are consumed.
    pub fn backward(&self, root: Var<'_, T>) -> Result<()> {
        assert!(std::ptr::eq(root.tape, self), "root belongs to another tape");
        let nodes = self.nodes.borrow();
        let root_value = &nodes[root.id].value;
        if root_value.len() != 1 {
            return Err(Error::Rank(format!(
                "backward needs a scalar root, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut grads = self.grads.borrow_mut();
        accumulate(&mut grads[root.id], Tensor::ones(root_value.shape().to_vec()));

        let view = Nodes(&nodes);
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[id].take() else {
                continue;
            };
            for (parent, g) in backward_rule(&node.op, &node.value, &gout, &view) {
                if nodes[parent].requires_grad {
                    accumulate(&mut grads[parent], g);
                }
            }
        }
        Ok(())
    }

    /// Clear all accumulated gradients.
    pub fn zero_grad(&self) {
        self.grads.borrow_mut().iter_mut().for_each(|g| *g = None);
    }

    /// Stack equally shaped tensors along a new axis.
    pub fn stack<'t>(&'t self, vars: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        arith::stack(self, vars, axis)
    }
}

fn accumulate<T: Element>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn backward_rule<T: Element>(
    op: &Op<T>,
    out: &Tensor<T>,
    gout: &Tensor<T>,
    nodes: &Nodes<'_, T>,
) -> Vec<(usize, Tensor<T>)> {
    match op {
        Op::Leaf => vec![],
        Op::Conv2d {
            input,
            kernel,
            bias,
            stride,
            padding,
        } => conv::backward(*input, *kernel, *bias, *stride, *padding, gout, nodes),
        Op::Dense {
            input,
            weight,
            bias,
        } => linear::backward(*input, *weight, *bias, gout, nodes),
        Op::BatchNorm(saved) => norm::backward(saved, gout, nodes),
        Op::Unary { input, kind } => activation::unary_backward(*kind, *input, out, gout, nodes),
        Op::PowScalar { input, exponent } => {
            vec![(*input, arith::pow_backward(nodes.value(*input), *exponent, gout))]
        }
        Op::Scale { input, factor } => vec![(*input, gout.map(|g| g * *factor))],
        Op::AddScalar { input } => vec![(*input, gout.clone())],
        Op::ClampMin { input, min } => {
            let x = nodes.value(*input);
            let data = x
                .data()
                .iter()
                .zip(gout.data())
                .map(|(&x, &g)| if x >= *min { g } else { T::zero() })
                .collect();
            vec![(*input, Tensor::new(x.shape().to_vec(), data).expect("shape preserved"))]
        }
        Op::Softmax { input, axis } => vec![(*input, activation::softmax_backward(out, gout, *axis))],
        Op::LogSoftmax { input, axis } => {
            vec![(*input, activation::log_softmax_backward(out, gout, *axis))]
        }
        Op::MaxPool { input, argmax } => {
            vec![(*input, pool::max_pool_backward(nodes.value(*input), argmax, gout))]
        }
        Op::GlobalAvgPool { input } => {
            vec![(*input, pool::global_avg_pool_backward(nodes.value(*input), gout))]
        }
        Op::Binary { kind, lhs, rhs } => arith::binary_backward(*kind, *lhs, *rhs, gout, nodes),
        Op::SumAll { input } => {
            let g = gout.item();
            vec![(*input, Tensor::full(nodes.value(*input).shape().to_vec(), g))]
        }
        Op::SumAxis { input, axis } => {
            vec![(*input, arith::sum_axis_backward(nodes.value(*input), *axis, gout))]
        }
        Op::Reshape { input } => {
            let shape = nodes.value(*input).shape().to_vec();
            vec![(*input, gout.reshape(shape).expect("reshape preserves length"))]
        }
        Op::Stack { inputs, axis } => arith::stack_backward(inputs, *axis, gout, nodes),
        Op::Select { input, axis, index } => {
            vec![(*input, arith::select_backward(nodes.value(*input), *axis, *index, gout))]
        }
        Op::GatherRows { input, indices } => {
            let x = nodes.value(*input);
            let cols = x.shape()[1];
            let mut g = Tensor::zeros(x.shape().to_vec());
            for (row, (&col, &gv)) in indices.iter().zip(gout.data()).enumerate() {
                g.data_mut()[row * cols + col] = gv;
            }
            vec![(*input, g)]
        }
    }
}

impl<'t, T: Element> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Accumulated gradient; `None` if nothing reached this variable.
    pub fn grad(&self) -> Option<Tensor<T>> {
        self.tape.grads.borrow()[self.id].clone()
    }

    /// Scalar value of a one-element variable.
    pub fn item(&self) -> T {
        self.value().item()
    }

    pub(crate) fn same_tape(&self, other: &Var<'t, T>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "variables recorded on different tapes"
        );
    }
}

impl<T: Element> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl<T: Element> Tape<T> {
    /// Hash of every piecewise branch taken so far: relu signs, max-pool
    /// winners and active clamps. Two forward passes with equal signatures
    /// evaluate the same smooth piece of a piecewise-smooth function.
    pub fn branch_signature(&self) -> u64 {
        let nodes = self.nodes.borrow();
        let mut h = DefaultHasher::new();
        for n in nodes.iter() {
            match &n.op {
                Op::Unary { input, kind: activation::Unary::Relu } => {
                    nodes[*input].value.data().iter().for_each(|v| (*v > T::zero()).hash(&mut h));
                }
                Op::ClampMin { input, min } => {
                    nodes[*input].value.data().iter().for_each(|v| (*v > *min).hash(&mut h));
                }
                Op::MaxPool { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }
}
