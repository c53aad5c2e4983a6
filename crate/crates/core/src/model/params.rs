use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{BatchNormState, Element, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Named trainable parameters plus batch-norm running statistics, kept in
/// creation order (which is also the checkpoint order).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    norms: Vec<(String, BatchNormState<T>)>,
    index: HashMap<String, usize>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            norms: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub(crate) fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        let id = self.params.len();
        assert!(self.index.insert(name.clone(), id).is_none(), "duplicate parameter {name}");
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.push(Param { name, value, grad });
        ParamId(id)
    }

    pub(crate) fn add_norm(&mut self, name: impl Into<String>, features: usize) -> usize {
        self.norms.push((name.into(), BatchNormState::new(features)));
        self.norms.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub(crate) fn norm_mut(&mut self, idx: usize) -> &mut BatchNormState<T> {
        &mut self.norms[idx].1
    }

    pub fn norms(&self) -> impl Iterator<Item = (&str, &BatchNormState<T>)> {
        self.norms.iter().map(|(n, s)| (n.as_str(), s))
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Every persistent tensor in checkpoint order: parameters, then running
    /// statistics as `<layer>.running_mean` / `<layer>.running_var`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self.params.iter().map(|p| (p.name.clone(), &p.value)).collect();
        for (name, st) in &self.norms {
            out.push((format!("{name}.running_mean"), &st.running_mean));
            out.push((format!("{name}.running_var"), &st.running_var));
        }
        out
    }

    /// Overwrite a persistent tensor by its checkpoint name.
    pub fn set_tensor(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = if let Some(&i) = self.index.get(name) {
            &mut self.params[i].value
        } else {
            let (layer, field) = name
                .rsplit_once('.')
                .ok_or_else(|| Error::Config(format!("unknown tensor {name}")))?;
            let st = self
                .norms
                .iter_mut()
                .find(|(n, _)| n == layer)
                .map(|(_, s)| s)
                .ok_or_else(|| Error::Config(format!("unknown tensor {name}")))?;
            match field {
                "running_mean" => &mut st.running_mean,
                "running_var" => &mut st.running_var,
                _ => return Err(Error::Config(format!("unknown tensor {name}"))),
            }
        };
        if slot.shape() != value.shape() {
            return Err(Error::dim(
                name.to_string(),
                format!("expected {:?}, got {:?}", slot.shape(), value.shape()),
            ));
        }
        *slot = value;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad.fill(T::zero()));
    }

    /// Record every parameter on `tape` as a differentiable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: self.params.iter().map(|p| tape.leaf(p.value.clone())).collect(),
        }
    }

    /// Add the gradients accumulated on the tape into the stored gradients.
    pub fn accumulate_grads(&mut self, bound: &Bound<'_, T>) {
        for (p, v) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(g) = v.grad() {
                p.grad.add_assign(&g);
            }
        }
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
            norms: self
                .norms
                .iter()
                .map(|(n, s)| {
                    (
                        n.clone(),
                        BatchNormState {
                            running_mean: s.running_mean.cast(),
                            running_var: s.running_var.cast(),
                        },
                    )
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Parameters recorded on one tape, indexed by [`ParamId`].
pub struct Bound<'t, T: Element> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Element> Bound<'t, T> {
    pub fn get(&self, id: ParamId) -> Var<'t, T> {
        self.vars[id.0]
    }
}

/// Kaiming-uniform initialization: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub(crate) fn kaiming_uniform<T: Element>(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(rng.random_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("shape matches length")
}
