use super::{LossConfig, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, Var};

fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::dim("batch", format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label {
            label: bad,
            num_classes: classes,
        });
    }
    Ok(())
}

/// Mean over the batch of `-alpha_y (1 - p_y)^gamma ln p_y` on softmax
/// probabilities `[N, C]`.
pub fn focal_loss<'t, T: Element>(probs: &Var<'t, T>, labels: &[usize], config: &LossConfig) -> Result<Var<'t, T>> {
    let shape = probs.shape();
    if shape.len() != 2 {
        return Err(Error::dim("rank", format!("focal loss expects [N, C], got {shape:?}")));
    }
    check_labels(labels, shape[0], shape[1])?;
    let p = probs.gather_rows(labels)?.clamp_min(PROB_FLOOR);
    let modulation = p.neg().add_scalar(1.0).pow_scalar(config.focal_gamma);
    let alpha: Vec<f64> = labels.iter().map(|&l| config.focal_alpha.weight(l)).collect();
    let alpha = probs.tape().constant(Tensor::from_f64(vec![labels.len()], &alpha)?);
    let per_sample = p.ln().mul(&modulation)?.mul(&alpha)?;
    Ok(per_sample.mean().neg())
}

/// Mean negative log-likelihood of the true class, with the same floor.
pub fn cross_entropy<'t, T: Element>(probs: &Var<'t, T>, labels: &[usize]) -> Result<Var<'t, T>> {
    let shape = probs.shape();
    if shape.len() != 2 {
        return Err(Error::dim("rank", format!("cross entropy expects [N, C], got {shape:?}")));
    }
    check_labels(labels, shape[0], shape[1])?;
    Ok(probs.gather_rows(labels)?.clamp_min(PROB_FLOOR).ln().mean().neg())
}
