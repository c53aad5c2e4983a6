use crate::error::{Error, Result};
use crate::tensor::tape::{Nodes, Op};
use crate::tensor::{Element, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with batch statistics and update the running averages.
    Train,
    /// Normalize with the running averages.
    Eval,
}

/// Running mean and variance of a batch-normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<T: Element> BatchNormState<T> {
    pub fn new(features: usize) -> Self {
        BatchNormState {
            running_mean: Tensor::zeros(vec![features]),
            running_var: Tensor::ones(vec![features]),
        }
    }
}

pub(crate) struct Saved<T> {
    pub(crate) input: usize,
    pub(crate) gamma: usize,
    pub(crate) beta: usize,
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
    train: bool,
    channels: usize,
    inner: usize,
}

/// (channels, spatial extent per channel) for `[N,F]` or `[N,C,H,W]`.
fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [n, f] => Ok((*n, *f, 1)),
        [n, c, h, w] => Ok((*n, *c, h * w)),
        _ => Err(Error::dim(
            "rank",
            format!("batchnorm expects [N,F] or [N,C,H,W], got {shape:?}"),
        )),
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// Batch normalization over axis 1. Gradients flow through the batch
    /// statistics in train mode.
    pub fn batchnorm(
        &self,
        gamma: &Var<'t, T>,
        beta: &Var<'t, T>,
        state: &mut BatchNormState<T>,
        mode: NormMode,
        momentum: f64,
        epsilon: f64,
    ) -> Result<Var<'t, T>> {
        self.same_tape(gamma);
        self.same_tape(beta);
        if epsilon <= 0.0 {
            return Err(Error::Config(format!("batchnorm epsilon must be positive, got {epsilon}")));
        }
        let x = self.value();
        let (n, channels, inner) = layout(x.shape())?;
        for (name, t) in [("gamma", gamma.value()), ("beta", beta.value())] {
            if t.shape() != [channels] {
                return Err(Error::dim(name, format!("expected [{channels}], got {:?}", t.shape())));
            }
        }
        if state.running_mean.len() != channels || state.running_var.len() != channels {
            return Err(Error::dim("running stats", format!("expected {channels} features")));
        }
        let train = mode == NormMode::Train;
        if train && n < 2 {
            return Err(Error::BatchSize(format!(
                "batchnorm in train mode needs at least 2 samples, got {n}"
            )));
        }

        let count = (n * inner) as f64;
        let at = |b: usize, c: usize| (b * channels + c) * inner;
        let mut mean = vec![0.0f64; channels];
        let mut var = vec![0.0f64; channels];
        if train {
            for c in 0..channels {
                let mut s = 0.0;
                for b in 0..n {
                    s += x.data()[at(b, c)..at(b, c) + inner].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let m = s / count;
                let mut ss = 0.0;
                for b in 0..n {
                    ss += x.data()[at(b, c)..at(b, c) + inner]
                        .iter()
                        .map(|v| (v.as_f64() - m).powi(2))
                        .sum::<f64>();
                }
                mean[c] = m;
                var[c] = ss / count;
            }
            let mom = momentum;
            for c in 0..channels {
                let rm = &mut state.running_mean.data_mut()[c];
                *rm = T::from_f64_lossy((1.0 - mom) * rm.as_f64() + mom * mean[c]);
                let rv = &mut state.running_var.data_mut()[c];
                let unbiased = var[c] * count / (count - 1.0);
                *rv = T::from_f64_lossy((1.0 - mom) * rv.as_f64() + mom * unbiased);
            }
        } else {
            for c in 0..channels {
                mean[c] = state.running_mean.data()[c].as_f64();
                var[c] = state.running_var.data()[c].as_f64();
            }
        }

        let inv_std: Vec<T> = var.iter().map(|v| T::from_f64_lossy(1.0 / (v + epsilon).sqrt())).collect();
        let mean_t: Vec<T> = mean.iter().map(|&m| T::from_f64_lossy(m)).collect();
        let gv = gamma.value();
        let bv = beta.value();
        let mut x_hat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for b in 0..n {
            for c in 0..channels {
                let r = at(b, c)..at(b, c) + inner;
                for i in r {
                    let h = (x.data()[i] - mean_t[c]) * inv_std[c];
                    x_hat[i] = h;
                    out[i] = gv.data()[c] * h + bv.data()[c];
                }
            }
        }
        let shape = x.shape().to_vec();
        let value = Tensor::new(shape.clone(), out)?;
        Ok(self.tape().record(
            value,
            Op::BatchNorm(Saved {
                input: self.id(),
                gamma: gamma.id(),
                beta: beta.id(),
                x_hat: Tensor::new(shape, x_hat)?,
                inv_std,
                train,
                channels,
                inner,
            }),
        ))
    }
}

pub(crate) fn backward<T: Element>(saved: &Saved<T>, gout: &Tensor<T>, nodes: &Nodes<'_, T>) -> Vec<(usize, Tensor<T>)> {
    let channels = saved.channels;
    let inner = saved.inner;
    let n = gout.len() / (channels * inner);
    let at = |b: usize, c: usize| (b * channels + c) * inner;
    let xh = saved.x_hat.data();
    let dy = gout.data();

    let mut sum_dy = vec![T::zero(); channels];
    let mut sum_dy_xh = vec![T::zero(); channels];
    for b in 0..n {
        for c in 0..channels {
            for i in at(b, c)..at(b, c) + inner {
                sum_dy[c] = sum_dy[c] + dy[i];
                sum_dy_xh[c] = sum_dy_xh[c] + dy[i] * xh[i];
            }
        }
    }

    let mut grads = Vec::with_capacity(3);
    if nodes.needs_grad(saved.input) {
        let gamma = nodes.value(saved.gamma);
        let m = T::from_usize(n * inner).expect("count fits");
        let mut dx = vec![T::zero(); gout.len()];
        for b in 0..n {
            for c in 0..channels {
                let scale = gamma.data()[c] * saved.inv_std[c];
                for i in at(b, c)..at(b, c) + inner {
                    dx[i] = if saved.train {
                        scale / m * (m * dy[i] - sum_dy[c] - xh[i] * sum_dy_xh[c])
                    } else {
                        scale * dy[i]
                    };
                }
            }
        }
        grads.push((saved.input, Tensor::new(gout.shape().to_vec(), dx).expect("input shape")));
    }
    if nodes.needs_grad(saved.gamma) {
        grads.push((saved.gamma, Tensor::new(vec![channels], sum_dy_xh).expect("gamma shape")));
    }
    if nodes.needs_grad(saved.beta) {
        grads.push((saved.beta, Tensor::new(vec![channels], sum_dy).expect("beta shape")));
    }
    grads
}
