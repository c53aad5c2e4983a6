use serde::{Deserialize, Serialize};

use super::config::{OptimizerKind, TrainConfig};
use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::{Element, Tensor};

/// Optimizer hyper-parameters for one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub betas: [f64; 2],
    pub epsilon: f64,
    pub momentum: f64,
}

impl OptimizerSettings {
    pub fn from_config(cfg: &TrainConfig, learning_rate: f64) -> Self {
        OptimizerSettings {
            kind: cfg.optimizer,
            learning_rate,
            weight_decay: cfg.weight_decay,
            betas: cfg.betas,
            epsilon: cfg.epsilon,
            momentum: cfg.momentum,
        }
    }
}

/// Step count and per-parameter moment buffers (parameter order).
/// SGD keeps its velocity in `first`; `second` stays zero.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
}

impl<T: Element> OptimizerState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        OptimizerState {
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    fn check(&self, params: &ParamStore<T>) -> Result<()> {
        if self.first.len() != params.len() || self.second.len() != params.len() {
            return Err(Error::dim("optimizer", format!("{} buffers for {} parameters", self.first.len(), params.len())));
        }
        for ((p, m), v) in params.iter().zip(&self.first).zip(&self.second) {
            if m.shape() != p.value.shape() || v.shape() != p.value.shape() {
                return Err(Error::dim(p.name.clone(), "moment buffer shape differs from parameter"));
            }
        }
        Ok(())
    }
}

/// Global L2 norm of all stored gradients.
pub fn grad_norm<T: Element>(params: &ParamStore<T>) -> f64 {
    params
        .iter()
        .flat_map(|p| p.grad.data().iter())
        .map(|g| g.as_f64().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Rescale gradients so their global norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm<T: Element>(params: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = grad_norm(params);
    if norm > max_norm {
        let s = max_norm / norm;
        for p in params.iter_mut() {
            for g in p.grad.data_mut() {
                *g = T::from_f64_lossy(g.as_f64() * s);
            }
        }
    }
    norm
}

/// One update from the stored gradients. The adaptive (or momentum) step
/// comes first, then decoupled decay `p <- p - lr * wd * p`. Non-finite
/// gradients are rejected before anything changes.
pub fn optimizer_step<T: Element>(
    params: &mut ParamStore<T>,
    state: &mut OptimizerState<T>,
    settings: &OptimizerSettings,
) -> Result<()> {
    state.check(params)?;
    if let Some(p) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::Divergence(format!("non-finite gradient in parameter {}", p.name)));
    }
    state.step += 1;
    let lr = settings.learning_rate;
    let decay = 1.0 - lr * settings.weight_decay;
    let [b1, b2] = settings.betas;
    let t = state.step as i32;
    let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
    for ((p, m), v) in params.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        let grads = p.grad.data();
        let values = p.value.data_mut();
        for i in 0..values.len() {
            let g = grads[i].as_f64();
            let mut x = values[i].as_f64();
            match settings.kind {
                OptimizerKind::Adam => {
                    let mi = b1 * m.data()[i].as_f64() + (1.0 - b1) * g;
                    let vi = b2 * v.data()[i].as_f64() + (1.0 - b2) * g * g;
                    m.data_mut()[i] = T::from_f64_lossy(mi);
                    v.data_mut()[i] = T::from_f64_lossy(vi);
                    x -= lr * (mi / c1) / ((vi / c2).sqrt() + settings.epsilon);
                }
                OptimizerKind::Sgd => {
                    let vel = settings.momentum * m.data()[i].as_f64() + g;
                    m.data_mut()[i] = T::from_f64_lossy(vel);
                    x -= lr * vel;
                }
            }
            values[i] = T::from_f64_lossy(x * decay);
        }
    }
    Ok(())
}
