use rand_chacha::ChaCha8Rng;

use super::params::{kaiming_uniform, Bound, ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::{Element, NormMode, Tensor, Var};

/// Per-forward settings shared by every batch-norm layer.
#[derive(Clone, Copy, Debug)]
pub(crate) struct NormSettings {
    pub mode: NormMode,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub padding: usize,
}

impl Conv {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        let weight = store.add(
            format!("{name}.weight"),
            kaiming_uniform(rng, vec![c_out, c_in, kernel, kernel], fan_in),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![c_out]));
        Conv {
            weight,
            bias,
            padding: kernel / 2,
        }
    }

    pub fn forward<'t, T: Element>(&self, b: &Bound<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(&b.get(self.weight), &b.get(self.bias), 1, self.padding)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new<T: Element>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, f_in: usize, f_out: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), kaiming_uniform(rng, vec![f_in, f_out], f_in));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![f_out]));
        Dense { weight, bias }
    }

    pub fn forward<'t, T: Element>(&self, b: &Bound<'t, T>, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        x.dense(&b.get(self.weight), &b.get(self.bias))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub state: usize,
}

impl Norm {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, features: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::ones(vec![features]));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(vec![features]));
        let state = store.add_norm(name, features);
        Norm { gamma, beta, state }
    }

    pub fn forward<'t, T: Element>(
        &self,
        store: &mut ParamStore<T>,
        b: &Bound<'t, T>,
        x: &Var<'t, T>,
        s: NormSettings,
    ) -> Result<Var<'t, T>> {
        x.batchnorm(
            &b.get(self.gamma),
            &b.get(self.beta),
            store.norm_mut(self.state),
            s.mode,
            s.momentum,
            s.epsilon,
        )
    }
}

/// Convolution followed by batch normalization.
#[derive(Clone, Debug)]
pub(crate) struct ConvNorm {
    pub conv: Conv,
    pub norm: Norm,
}

impl ConvNorm {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
    ) -> Self {
        ConvNorm {
            conv: Conv::new(store, rng, &format!("{name}.conv"), c_in, c_out, kernel),
            norm: Norm::new(store, &format!("{name}.bn"), c_out),
        }
    }

    pub fn forward<'t, T: Element>(
        &self,
        store: &mut ParamStore<T>,
        b: &Bound<'t, T>,
        x: &Var<'t, T>,
        s: NormSettings,
    ) -> Result<Var<'t, T>> {
        let y = self.conv.forward(b, x)?;
        self.norm.forward(store, b, &y, s)
    }
}
