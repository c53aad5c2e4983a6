use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor, Var};

/// Concordance correlation coefficient with population moments:
/// `2 s_xy / (s_x^2 + s_y^2 + (mean_x - mean_y)^2)`. Returns 0 when the
/// denominator vanishes.
pub fn ccc(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dim(
            "length",
            format!("{} predictions for {} targets", pred.len(), target.len()),
        ));
    }
    if pred.len() < 2 {
        return Err(Error::SampleSize(format!("ccc needs at least 2 samples, got {}", pred.len())));
    }
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<f64>() / n;
    let my = target.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in pred.iter().zip(target) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let denom = sxx / n + syy / n + (mx - my) * (mx - my);
    Ok(if denom == 0.0 { 0.0 } else { 2.0 * (sxy / n) / denom })
}

/// Mean of valence and arousal CCC over `(valence, arousal)` pairs.
pub fn mean_ccc(pred: &[[f64; 2]], target: &[[f64; 2]]) -> Result<(f64, [f64; 2])> {
    let column = |rows: &[[f64; 2]], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let v = ccc(&column(pred, 0), &column(target, 0))?;
    let a = ccc(&column(pred, 1), &column(target, 1))?;
    Ok(((v + a) / 2.0, [v, a]))
}

/// `1 - (CCC_valence + CCC_arousal) / 2` on predictions `[N, 2]`.
pub fn ccc_loss<'t, T: Element>(pred: &Var<'t, T>, target: &[[f64; 2]]) -> Result<Var<'t, T>> {
    let shape = pred.shape();
    if shape.len() != 2 || shape[1] != 2 {
        return Err(Error::dim("predictions", format!("expected [N, 2], got {shape:?}")));
    }
    let n = shape[0];
    if target.len() != n {
        return Err(Error::dim("batch", format!("{} targets for {n} predictions", target.len())));
    }
    if n < 2 {
        return Err(Error::SampleSize(format!("ccc needs at least 2 samples, got {n}")));
    }
    if target.iter().flatten().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Error::Config("valence/arousal targets must lie in [-1, 1]".into()));
    }
    let tape = pred.tape();
    let mut channels = Vec::with_capacity(2);
    for j in 0..2 {
        let y: Vec<f64> = target.iter().map(|r| r[j]).collect();
        let my = y.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = y.iter().map(|v| v - my).collect();
        let syy = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let dy = tape.constant(Tensor::from_f64(vec![n], &centered)?);

        let x = pred.select(1, j)?;
        let mx = x.mean();
        let dx = x.sub(&mx)?;
        let sxy = dx.mul(&dy)?.mean();
        let sxx = dx.square().mean();
        let denom = sxx.add(&mx.add_scalar(-my).square())?.add_scalar(syy);
        channels.push(if denom.item() == T::zero() {
            tape.constant(Tensor::scalar(T::zero()))
        } else {
            sxy.scale(2.0).div(&denom)?
        });
    }
    Ok(channels[0].add(&channels[1])?.scale(-0.5).add_scalar(1.0))
}
