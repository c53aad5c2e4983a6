use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, Var};

const VARIANCE_EPSILON: f64 = 1e-8;

/// Number of affinity keys in VA mode: a 3 x 3 grid over the (v, a) square.
pub const VA_BINS: usize = 9;

/// Affinity key of a (valence, arousal) pair.
pub fn va_bin(valence: f64, arousal: f64) -> usize {
    let q = |x: f64| (((x + 1.0) / 2.0 * 3.0).floor() as isize).clamp(0, 2) as usize;
    q(valence) * 3 + q(arousal)
}

/// Running class centers for the affinity loss. A center is absent until its
/// class first appears in a training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassCenters {
    num_classes: usize,
    dim: usize,
    centers: Vec<f64>,
    present: Vec<bool>,
}

impl ClassCenters {
    pub fn new(num_classes: usize, dim: usize) -> Self {
        ClassCenters {
            num_classes,
            dim,
            centers: vec![0.0; num_classes * dim],
            present: vec![false; num_classes],
        }
    }

    /// Centers with explicit rows; `None` rows are absent.
    pub fn from_rows(dim: usize, rows: &[Option<Vec<f64>>]) -> Result<Self> {
        let mut c = Self::new(rows.len(), dim);
        for (k, row) in rows.iter().enumerate() {
            if let Some(r) = row {
                if r.len() != dim {
                    return Err(Error::dim("center", format!("row {k} has {} values, expected {dim}", r.len())));
                }
                c.centers[k * dim..(k + 1) * dim].copy_from_slice(r);
                c.present[k] = true;
            }
        }
        Ok(c)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, class: usize) -> Option<&[f64]> {
        self.present[class].then(|| &self.centers[class * self.dim..(class + 1) * self.dim])
    }

    pub fn present(&self) -> &[bool] {
        &self.present
    }

    pub fn values(&self) -> &[f64] {
        &self.centers
    }

    /// Restore from flat values and presence flags (checkpoint load).
    pub fn restore(num_classes: usize, dim: usize, centers: Vec<f64>, present: Vec<bool>) -> Result<Self> {
        if centers.len() != num_classes * dim || present.len() != num_classes {
            return Err(Error::dim("centers", "center table does not match its declared size"));
        }
        Ok(ClassCenters {
            num_classes,
            dim,
            centers,
            present,
        })
    }

    /// Spread of the present centers: mean over features of the population
    /// variance across center rows.
    pub fn variance(&self) -> f64 {
        let rows: Vec<&[f64]> = (0..self.num_classes).filter_map(|k| self.row(k)).collect();
        if rows.is_empty() {
            return 0.0;
        }
        let k = rows.len() as f64;
        let mut total = 0.0;
        for f in 0..self.dim {
            let mean = rows.iter().map(|r| r[f]).sum::<f64>() / k;
            total += rows.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / k;
        }
        total / self.dim as f64
    }

    /// Move each center present in the batch toward its batch mean by
    /// `lr * (mean - center)`; a class seen for the first time takes its mean.
    pub fn update<T: Element>(&mut self, features: &Tensor<T>, keys: &[usize], lr: f64) -> Result<()> {
        let (n, dim) = (features.shape()[0], features.shape()[1]);
        if dim != self.dim || keys.len() != n {
            return Err(Error::dim("features", format!("expected [{}, {}]", keys.len(), self.dim)));
        }
        for class in 0..self.num_classes {
            let members: Vec<usize> = (0..n).filter(|&i| keys[i] == class).collect();
            if members.is_empty() {
                continue;
            }
            for f in 0..dim {
                let mean = members.iter().map(|&i| features.data()[i * dim + f].as_f64()).sum::<f64>() / members.len() as f64;
                let c = &mut self.centers[class * dim + f];
                *c = if self.present[class] { *c + lr * (mean - *c) } else { mean };
            }
            self.present[class] = true;
        }
        Ok(())
    }
}

/// `(1/M) sum_i ||x_i - c_{y_i}||^2 / (var(centers) + 1e-8)` over the `M`
/// samples whose class center is present. Centers are constants: gradient
/// reaches the features only. With fewer than two centers present there is
/// no spread to normalize by and the loss is a constant 0.
pub fn affinity_loss<'t, T: Element>(features: &Var<'t, T>, keys: &[usize], centers: &ClassCenters) -> Result<Var<'t, T>> {
    let shape = features.shape();
    let tape = features.tape();
    if shape.len() != 2 || shape[1] != centers.dim {
        return Err(Error::dim("features", format!("expected [N, {}], got {shape:?}", centers.dim)));
    }
    let n = shape[0];
    if n == 0 {
        return Err(Error::BatchSize("affinity loss needs at least one sample".into()));
    }
    if keys.len() != n {
        return Err(Error::dim("batch", format!("{} labels for {n} rows", keys.len())));
    }
    if let Some(&bad) = keys.iter().find(|&&k| k >= centers.num_classes) {
        return Err(Error::Label {
            label: bad,
            num_classes: centers.num_classes,
        });
    }
    let present = centers.present.iter().filter(|&&p| p).count();
    let used: Vec<bool> = keys.iter().map(|&k| centers.present[k]).collect();
    let m = used.iter().filter(|&&u| u).count();
    if present < 2 || m == 0 {
        return Ok(tape.constant(Tensor::scalar(T::zero())));
    }

    let dim = centers.dim;
    let mut target = vec![0.0; n * dim];
    let mut mask = vec![0.0; n];
    for (i, &k) in keys.iter().enumerate() {
        if used[i] {
            target[i * dim..(i + 1) * dim].copy_from_slice(centers.row(k).expect("present"));
            mask[i] = 1.0;
        }
    }
    let target = tape.constant(Tensor::from_f64(vec![n, dim], &target)?);
    let mask = tape.constant(Tensor::from_f64(vec![n, 1], &mask)?);
    let diff = features.sub(&target)?.mul(&mask)?;
    let scale = 1.0 / (m as f64 * (centers.variance() + VARIANCE_EPSILON));
    Ok(diff.square().sum().scale(scale))
}
