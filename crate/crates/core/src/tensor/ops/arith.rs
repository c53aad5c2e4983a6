//! Elementwise arithmetic with broadcasting, reductions and shape ops.

use super::activation::axis_layout;
use crate::error::{Error, Result};
use crate::tensor::storage::MAX_RANK;
use crate::tensor::tape::{Nodes, Op};
use crate::tensor::{Element, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        }
    }

    fn apply<T: Element>(self, a: T, b: T) -> T {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a / b,
        }
    }
}

/// Index mapping for a broadcast binary op, padded to rank 4.
struct Broadcast {
    out_shape: Vec<usize>,
    dims: [usize; MAX_RANK],
    lhs_strides: [usize; MAX_RANK],
    rhs_strides: [usize; MAX_RANK],
}

fn padded(shape: &[usize]) -> [usize; MAX_RANK] {
    let mut p = [1; MAX_RANK];
    p[MAX_RANK - shape.len()..].copy_from_slice(shape);
    p
}

fn strides_for(dims: &[usize; MAX_RANK], out: &[usize; MAX_RANK]) -> [usize; MAX_RANK] {
    let mut s = [0; MAX_RANK];
    let mut acc = 1;
    for i in (0..MAX_RANK).rev() {
        s[i] = if dims[i] == 1 && out[i] != 1 { 0 } else { acc };
        acc *= dims[i];
    }
    s
}

impl Broadcast {
    fn new(lhs: &[usize], rhs: &[usize]) -> Result<Self> {
        let rank = lhs.len().max(rhs.len());
        let (l, r) = (padded(lhs), padded(rhs));
        let mut dims = [1; MAX_RANK];
        for i in 0..MAX_RANK {
            dims[i] = match (l[i], r[i]) {
                (a, b) if a == b => a,
                (1, b) => b,
                (a, 1) => a,
                (a, b) => {
                    return Err(Error::dim(
                        format!("axis {}", i + rank - MAX_RANK),
                        format!("cannot broadcast {lhs:?} with {rhs:?} ({a} vs {b})"),
                    ))
                }
            };
        }
        Ok(Broadcast {
            out_shape: dims[MAX_RANK - rank..].to_vec(),
            lhs_strides: strides_for(&l, &dims),
            rhs_strides: strides_for(&r, &dims),
            dims,
        })
    }

    /// Visit `(out, lhs, rhs)` flat offsets in output order.
    fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let d = self.dims;
        let (ls, rs) = (self.lhs_strides, self.rhs_strides);
        let mut o = 0;
        for i0 in 0..d[0] {
            for i1 in 0..d[1] {
                for i2 in 0..d[2] {
                    for i3 in 0..d[3] {
                        let li = i0 * ls[0] + i1 * ls[1] + i2 * ls[2] + i3 * ls[3];
                        let ri = i0 * rs[0] + i1 * rs[1] + i2 * rs[2] + i3 * rs[3];
                        f(o, li, ri);
                        o += 1;
                    }
                }
            }
        }
    }
}

impl<'t, T: Element> Var<'t, T> {
    fn binary(&self, other: &Var<'t, T>, kind: Binary) -> Result<Var<'t, T>> {
        self.same_tape(other);
        let a = self.value();
        let b = other.value();
        let value = if a.shape() == b.shape() {
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| kind.apply(x, y)).collect();
            Tensor::new(a.shape().to_vec(), data)?
        } else {
            let plan = Broadcast::new(a.shape(), b.shape())?;
            let mut data = vec![T::zero(); plan.out_shape.iter().product()];
            plan.for_each(|o, l, r| data[o] = kind.apply(a.data()[l], b.data()[r]));
            Tensor::new(plan.out_shape, data)?
        };
        Ok(self.tape().record(
            value,
            Op::Binary {
                kind,
                lhs: self.id(),
                rhs: other.id(),
            },
        ))
    }

    /// Elementwise sum with NumPy-style broadcasting.
    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Binary::Add)
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Binary::Sub)
    }

    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Binary::Mul)
    }

    pub fn div(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, Binary::Div)
    }

    pub fn square(&self) -> Var<'t, T> {
        self.mul(self).expect("same shape")
    }

    pub fn scale(&self, factor: f64) -> Var<'t, T> {
        let factor = T::from_f64_lossy(factor);
        let value = self.value().map(|v| v * factor);
        self.tape().record(value, Op::Scale { input: self.id(), factor })
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t, T> {
        let c = T::from_f64_lossy(c);
        let value = self.value().map(|v| v + c);
        self.tape().record(value, Op::AddScalar { input: self.id() })
    }

    /// `x^exponent`. The derivative is taken as 0 where it is undefined
    /// (`x == 0` with `exponent < 1`).
    pub fn pow_scalar(&self, exponent: f64) -> Var<'t, T> {
        let e = T::from_f64_lossy(exponent);
        let value = self.value().map(|v| if exponent == 0.0 { T::one() } else { v.powf(e) });
        self.tape().record(value, Op::PowScalar { input: self.id(), exponent: e })
    }

    /// `max(x, min)`; no gradient flows below the floor.
    pub fn clamp_min(&self, min: f64) -> Var<'t, T> {
        let min = T::from_f64_lossy(min);
        let value = self.value().map(|v| v.max(min));
        self.tape().record(value, Op::ClampMin { input: self.id(), min })
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Var<'t, T> {
        let total = self.value().data().iter().copied().sum::<T>();
        self.tape().record(Tensor::scalar(total), Op::SumAll { input: self.id() })
    }

    pub fn mean(&self) -> Var<'t, T> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum along `axis`, dropping it (or keeping it as extent 1).
    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Var<'t, T>> {
        let x = self.value();
        let (outer, len, inner) = axis_layout(x.shape(), axis)?;
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..len {
                let src = &x.data()[(o * len + k) * inner..(o * len + k + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc = *acc + v;
                }
            }
        }
        let mut shape = x.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.tape().record(value, Op::SumAxis { input: self.id(), axis }))
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Var<'t, T>> {
        let len = self.shape().get(axis).copied().unwrap_or(1);
        Ok(self.sum_axis(axis, keepdim)?.scale(1.0 / len as f64))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t, T>> {
        let value = self.value().reshape(shape)?;
        Ok(self.tape().record(value, Op::Reshape { input: self.id() }))
    }

    /// Take index `index` along `axis`, dropping the axis.
    pub fn select(&self, axis: usize, index: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let (outer, len, inner) = axis_layout(x.shape(), axis)?;
        if index >= len {
            return Err(Error::dim(format!("axis {axis}"), format!("index {index} out of range {len}")));
        }
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            out.extend_from_slice(&x.data()[(o * len + index) * inner..(o * len + index + 1) * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        Ok(self.tape().record(value, Op::Select { input: self.id(), axis, index }))
    }

    /// For `[N,C]` input pick `x[i, indices[i]]`, giving `[N]`.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let [n, c] = x.shape() else {
            return Err(Error::dim("rank", format!("gather_rows expects [N,C], got {:?}", x.shape())));
        };
        if indices.len() != *n {
            return Err(Error::dim("axis 0", format!("{} indices for {n} rows", indices.len())));
        }
        let mut out = Vec::with_capacity(*n);
        for (row, &col) in indices.iter().enumerate() {
            if col >= *c {
                return Err(Error::dim("axis 1", format!("index {col} out of range {c}")));
            }
            out.push(x.data()[row * c + col]);
        }
        let value = Tensor::new(vec![*n], out)?;
        Ok(self.tape().record(
            value,
            Op::GatherRows {
                input: self.id(),
                indices: indices.to_vec(),
            },
        ))
    }
}

pub(crate) fn stack<'t, T: Element>(tape: &'t Tape<T>, vars: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
    let first = vars
        .first()
        .ok_or_else(|| Error::Config("stack needs at least one tensor".into()))?;
    let shape = first.shape();
    if axis > shape.len() || shape.len() + 1 > MAX_RANK {
        return Err(Error::dim(format!("axis {axis}"), format!("cannot stack shape {shape:?}")));
    }
    let values: Vec<_> = vars.iter().map(|v| v.value()).collect();
    for (i, v) in values.iter().enumerate() {
        if v.shape() != shape.as_slice() {
            return Err(Error::dim(
                format!("stack input {i}"),
                format!("expected {shape:?}, got {:?}", v.shape()),
            ));
        }
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis..].iter().product();
    let mut out = Vec::with_capacity(outer * inner * vars.len());
    for o in 0..outer {
        for v in &values {
            out.extend_from_slice(&v.data()[o * inner..(o + 1) * inner]);
        }
    }
    let mut out_shape = shape.clone();
    out_shape.insert(axis, vars.len());
    let value = Tensor::new(out_shape, out)?;
    Ok(tape.record(
        value,
        Op::Stack {
            inputs: vars.iter().map(|v| v.id()).collect(),
            axis,
        },
    ))
}

pub(crate) fn binary_backward<T: Element>(
    kind: Binary,
    lhs: usize,
    rhs: usize,
    gout: &Tensor<T>,
    nodes: &Nodes<'_, T>,
) -> Vec<(usize, Tensor<T>)> {
    let a = nodes.value(lhs);
    let b = nodes.value(rhs);
    let mut da = Tensor::zeros(a.shape().to_vec());
    let mut db = Tensor::zeros(b.shape().to_vec());
    let g = gout.data();
    let mut step = |o: usize, l: usize, r: usize| {
        let (x, y) = (a.data()[l], b.data()[r]);
        let (gl, gr) = match kind {
            Binary::Add => (g[o], g[o]),
            Binary::Sub => (g[o], -g[o]),
            Binary::Mul => (g[o] * y, g[o] * x),
            Binary::Div => (g[o] / y, -g[o] * x / (y * y)),
        };
        da.data_mut()[l] = da.data()[l] + gl;
        db.data_mut()[r] = db.data()[r] + gr;
    };
    if a.shape() == b.shape() {
        (0..a.len()).for_each(|i| step(i, i, i));
    } else {
        Broadcast::new(a.shape(), b.shape())
            .expect("validated in forward")
            .for_each(step);
    }
    let mut grads = Vec::with_capacity(2);
    if nodes.needs_grad(lhs) {
        grads.push((lhs, da));
    }
    if nodes.needs_grad(rhs) {
        grads.push((rhs, db));
    }
    grads
}

pub(crate) fn pow_backward<T: Element>(x: &Tensor<T>, exponent: T, gout: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(gout.data())
        .map(|(&v, &g)| {
            if exponent == T::zero() || (v == T::zero() && exponent < T::one()) {
                T::zero()
            } else {
                g * exponent * v.powf(exponent - T::one())
            }
        })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

pub(crate) fn sum_axis_backward<T: Element>(x: &Tensor<T>, axis: usize, gout: &Tensor<T>) -> Tensor<T> {
    let (outer, len, inner) = axis_layout(x.shape(), axis).expect("validated in forward");
    let mut dx = Vec::with_capacity(x.len());
    for o in 0..outer {
        for _ in 0..len {
            dx.extend_from_slice(&gout.data()[o * inner..(o + 1) * inner]);
        }
    }
    Tensor::new(x.shape().to_vec(), dx).expect("shape preserved")
}

pub(crate) fn stack_backward<T: Element>(
    inputs: &[usize],
    axis: usize,
    gout: &Tensor<T>,
    nodes: &Nodes<'_, T>,
) -> Vec<(usize, Tensor<T>)> {
    let shape = nodes.value(inputs[0]).shape().to_vec();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis..].iter().product();
    let h = inputs.len();
    inputs
        .iter()
        .enumerate()
        .filter(|(_, &id)| nodes.needs_grad(id))
        .map(|(k, &id)| {
            let mut d = Vec::with_capacity(outer * inner);
            for o in 0..outer {
                d.extend_from_slice(&gout.data()[(o * h + k) * inner..(o * h + k + 1) * inner]);
            }
            (id, Tensor::new(shape.clone(), d).expect("shape preserved"))
        })
        .collect()
}

pub(crate) fn select_backward<T: Element>(x: &Tensor<T>, axis: usize, index: usize, gout: &Tensor<T>) -> Tensor<T> {
    let (outer, len, inner) = axis_layout(x.shape(), axis).expect("validated in forward");
    let mut dx = Tensor::zeros(x.shape().to_vec());
    for o in 0..outer {
        dx.data_mut()[(o * len + index) * inner..(o * len + index + 1) * inner]
            .copy_from_slice(&gout.data()[o * inner..(o + 1) * inner]);
    }
    dx
}
