use crate::error::{Error, Result};
use crate::tensor::tape::Op;
use crate::tensor::{Element, Tensor, Var};

fn nchw(shape: &[usize], op: &str) -> Result<(usize, usize, usize, usize)> {
    match shape {
        [n, c, h, w] => Ok((*n, *c, *h, *w)),
        _ => Err(Error::dim("rank", format!("{op} expects NCHW input, got {shape:?}"))),
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// Max pooling without padding; trailing rows/columns that do not fill a
    /// window are dropped. Ties resolve to the first maximum in row-major order.
    pub fn max_pool(&self, window: usize, stride: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, c, h, w) = nchw(x.shape(), "max_pool")?;
        if window == 0 || stride == 0 {
            return Err(Error::Geometry("pool window and stride must be positive".into()));
        }
        if window > h || window > w {
            return Err(Error::Geometry(format!(
                "pool window {window} larger than input {h}x{w}"
            )));
        }
        let ho = (h - window) / stride + 1;
        let wo = (w - window) / stride + 1;
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * stride * w + ox * stride;
                    for dy in 0..window {
                        for dx in 0..window {
                            let i = base + (oy * stride + dy) * w + ox * stride + dx;
                            if x.data()[i] > x.data()[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(x.data()[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![n, c, ho, wo], out)?;
        Ok(self.tape().record(value, Op::MaxPool { input: self.id(), argmax }))
    }

    /// Mean over the spatial axes: `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&self) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, c, h, w) = nchw(x.shape(), "global_avg_pool")?;
        let area = T::from_usize(h * w).expect("area fits");
        let out = x.data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() / area).collect();
        let value = Tensor::new(vec![n, c], out)?;
        Ok(self.tape().record(value, Op::GlobalAvgPool { input: self.id() }))
    }
}

pub(crate) fn max_pool_backward<T: Element>(x: &Tensor<T>, argmax: &[usize], gout: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(x.shape().to_vec());
    for (&i, &g) in argmax.iter().zip(gout.data()) {
        dx.data_mut()[i] = dx.data()[i] + g;
    }
    dx
}

pub(crate) fn global_avg_pool_backward<T: Element>(x: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
    let area = x.shape()[2] * x.shape()[3];
    let scale = T::one() / T::from_usize(area).expect("area fits");
    let data = gout.data().iter().flat_map(|&g| std::iter::repeat_n(g * scale, area)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}
