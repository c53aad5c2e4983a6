use crate::error::{Error, Result};
use crate::tensor::tape::{Nodes, Op};
use crate::tensor::{Element, Tensor, Var};

impl<'t, T: Element> Var<'t, T> {
    /// Affine map `input[N,F] x weight[F,G] + bias[G]`.
    pub fn dense(&self, weight: &Var<'t, T>, bias: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(weight);
        self.same_tape(bias);
        let x = self.value();
        let w = weight.value();
        let b = bias.value();
        if x.rank() != 2 || w.rank() != 2 {
            return Err(Error::dim(
                "rank",
                format!("dense expects [N,F] x [F,G], got {:?} x {:?}", x.shape(), w.shape()),
            ));
        }
        let (n, f) = (x.shape()[0], x.shape()[1]);
        let (wf, g) = (w.shape()[0], w.shape()[1]);
        if wf != f {
            return Err(Error::dim(
                "inner (axis 1)",
                format!("input has {f} features but weight expects {wf}"),
            ));
        }
        if b.shape() != [g] {
            return Err(Error::dim("bias", format!("expected [{g}], got {:?}", b.shape())));
        }
        let mut out = Vec::with_capacity(n * g);
        for _ in 0..n {
            out.extend_from_slice(b.data());
        }
        T::gemm(false, false, n, f, g, T::one(), x.data(), w.data(), T::one(), &mut out);
        let value = Tensor::new(vec![n, g], out)?;
        Ok(self.tape().record(
            value,
            Op::Dense {
                input: self.id(),
                weight: weight.id(),
                bias: bias.id(),
            },
        ))
    }
}

pub(crate) fn backward<T: Element>(
    input: usize,
    weight: usize,
    bias: usize,
    gout: &Tensor<T>,
    nodes: &Nodes<'_, T>,
) -> Vec<(usize, Tensor<T>)> {
    let x = nodes.value(input);
    let w = nodes.value(weight);
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let g = w.shape()[1];
    let mut grads = Vec::with_capacity(3);
    if nodes.needs_grad(input) {
        let mut dx = vec![T::zero(); n * f];
        T::gemm(false, true, n, g, f, T::one(), gout.data(), w.data(), T::zero(), &mut dx);
        grads.push((input, Tensor::new(vec![n, f], dx).expect("input shape")));
    }
    if nodes.needs_grad(weight) {
        let mut dw = vec![T::zero(); f * g];
        T::gemm(true, false, f, n, g, T::one(), x.data(), gout.data(), T::zero(), &mut dw);
        grads.push((weight, Tensor::new(vec![f, g], dw).expect("weight shape")));
    }
    if nodes.needs_grad(bias) {
        let mut db = vec![T::zero(); g];
        for row in gout.data().chunks(g) {
            for (acc, &v) in db.iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
        grads.push((bias, Tensor::new(vec![g], db).expect("bias shape")));
    }
    grads
}
