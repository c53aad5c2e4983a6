//! Central finite-difference verification of tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic and numeric gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub checked: usize,
    pub pass: bool,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare `analytic` against `(f(x + h e_i) - f(x - h e_i)) / 2h` at every
/// coordinate of `x`, or only at `coords` when given.
pub fn compare_gradient(
    analytic: &Tensor<f64>,
    x: &Tensor<f64>,
    mut value_at: impl FnMut(&Tensor<f64>) -> Result<f64>,
    step: f64,
    tolerance: f64,
    coords: Option<&[usize]>,
) -> Result<GradCheckReport> {
    if analytic.shape() != x.shape() {
        return Err(Error::dim(
            "gradient",
            format!("gradient shape {:?} differs from input {:?}", analytic.shape(), x.shape()),
        ));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let mut probe = x.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        checked: 0,
        pass: true,
    };
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = value_at(&probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = value_at(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic.data()[i], numeric);
        if err.is_nan() || err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    report.pass = report.max_rel_err < tolerance;
    Ok(report)
}

/// Check the gradient of the scalar function `f` at `x` (64-bit only).
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let input = tape.leaf(x.clone());
    let out = f(&tape, input)?;
    tape.backward(out)?;
    let analytic = input.grad().unwrap_or_else(|| Tensor::zeros(x.shape().to_vec()));
    compare_gradient(
        &analytic,
        x,
        |probe| {
            let tape = Tape::new();
            let v = tape.constant(probe.clone());
            Ok(f(&tape, v)?.item())
        },
        step,
        tolerance,
        None,
    )
}
