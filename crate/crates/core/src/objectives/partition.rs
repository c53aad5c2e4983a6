use crate::error::{Error, Result};
use crate::tensor::{Element, Var};

/// Head-diversity penalty `1 / (1 + v)`, where `v` is the mean over samples
/// and features of the population variance across heads.
pub fn partition_loss<'t, T: Element>(head_features: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    let first = head_features
        .first()
        .ok_or_else(|| Error::Config("partition loss needs at least one head".into()))?;
    let stacked = first.tape().stack(head_features, 0)?;
    let centered = stacked.sub(&stacked.mean_axis(0, true)?)?;
    let variance = centered.square().mean_axis(0, false)?.mean();
    Ok(variance.add_scalar(1.0).pow_scalar(-1.0))
}
