use crate::error::{Error, Result};
use crate::tensor::tape::{Nodes, Op};
use crate::tensor::{Element, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Ln,
    Neg,
}

impl Unary {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Unary::Relu => "relu",
            Unary::Sigmoid => "sigmoid",
            Unary::Tanh => "tanh",
            Unary::Exp => "exp",
            Unary::Ln => "ln",
            Unary::Neg => "neg",
        }
    }

    fn apply<T: Element>(self, x: T) -> T {
        match self {
            Unary::Relu => x.max(T::zero()),
            Unary::Sigmoid => {
                // Branch on sign so exp never overflows.
                if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                }
            }
            Unary::Tanh => x.tanh(),
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Neg => -x,
        }
    }
}

/// `(outer, extent, inner)` strides for iterating slices along `axis`.
pub(crate) fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::dim(
            format!("axis {axis}"),
            format!("out of range for shape {shape:?}"),
        ));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl<'t, T: Element> Var<'t, T> {
    fn unary(&self, kind: Unary) -> Var<'t, T> {
        let value = self.value().map(|v| kind.apply(v));
        self.tape().record(value, Op::Unary { input: self.id(), kind })
    }

    pub fn relu(&self) -> Var<'t, T> {
        self.unary(Unary::Relu)
    }

    pub fn sigmoid(&self) -> Var<'t, T> {
        self.unary(Unary::Sigmoid)
    }

    pub fn tanh(&self) -> Var<'t, T> {
        self.unary(Unary::Tanh)
    }

    pub fn exp(&self) -> Var<'t, T> {
        self.unary(Unary::Exp)
    }

    pub fn ln(&self) -> Var<'t, T> {
        self.unary(Unary::Ln)
    }

    pub fn neg(&self) -> Var<'t, T> {
        self.unary(Unary::Neg)
    }

    /// Max-shifted softmax over every slice along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let (outer, len, inner) = axis_layout(x.shape(), axis)?;
        let mut out = x.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| out[idx(k)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for k in 0..len {
                    let e = (out[idx(k)] - max).exp();
                    out[idx(k)] = e;
                    total = total + e;
                }
                for k in 0..len {
                    out[idx(k)] = out[idx(k)] / total;
                }
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.tape().record(value, Op::Softmax { input: self.id(), axis }))
    }

    /// Numerically stable `ln(softmax(x))` along `axis`.
    pub fn log_softmax(&self, axis: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let (outer, len, inner) = axis_layout(x.shape(), axis)?;
        let mut out = x.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| out[idx(k)]).fold(T::neg_infinity(), T::max);
                let lse = max + (0..len).map(|k| (out[idx(k)] - max).exp()).sum::<T>().ln();
                for k in 0..len {
                    out[idx(k)] = out[idx(k)] - lse;
                }
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.tape().record(value, Op::LogSoftmax { input: self.id(), axis }))
    }
}

pub(crate) fn unary_backward<T: Element>(
    kind: Unary,
    input: usize,
    out: &Tensor<T>,
    gout: &Tensor<T>,
    nodes: &Nodes<'_, T>,
) -> Vec<(usize, Tensor<T>)> {
    let x = nodes.value(input);
    let one = T::one();
    let data = x
        .data()
        .iter()
        .zip(out.data())
        .zip(gout.data())
        .map(|((&x, &y), &g)| match kind {
            Unary::Relu => {
                if x > T::zero() {
                    g
                } else {
                    T::zero()
                }
            }
            Unary::Sigmoid => g * y * (one - y),
            Unary::Tanh => g * (one - y * y),
            Unary::Exp => g * y,
            Unary::Ln => g / x,
            Unary::Neg => -g,
        })
        .collect();
    vec![(input, Tensor::new(x.shape().to_vec(), data).expect("shape preserved"))]
}

pub(crate) fn softmax_backward<T: Element>(y: &Tensor<T>, gout: &Tensor<T>, axis: usize) -> Tensor<T> {
    let (outer, len, inner) = axis_layout(y.shape(), axis).expect("validated in forward");
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let dot = (0..len).map(|k| gout.data()[idx(k)] * y.data()[idx(k)]).sum::<T>();
            for k in 0..len {
                dx[idx(k)] = y.data()[idx(k)] * (gout.data()[idx(k)] - dot);
            }
        }
    }
    Tensor::new(y.shape().to_vec(), dx).expect("shape preserved")
}

pub(crate) fn log_softmax_backward<T: Element>(y: &Tensor<T>, gout: &Tensor<T>, axis: usize) -> Tensor<T> {
    let (outer, len, inner) = axis_layout(y.shape(), axis).expect("validated in forward");
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let total = (0..len).map(|k| gout.data()[idx(k)]).sum::<T>();
            for k in 0..len {
                dx[idx(k)] = gout.data()[idx(k)] - y.data()[idx(k)].exp() * total;
            }
        }
    }
    Tensor::new(y.shape().to_vec(), dx).expect("shape preserved")
}
