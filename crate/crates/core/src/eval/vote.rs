use std::collections::HashMap;

use super::records::PredictionRecord;
use crate::error::{Error, Result};
use crate::model::Task;

fn normalized_weights(members: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let w = match weights {
        None => vec![1.0; members],
        Some(w) if w.len() == members => w.to_vec(),
        Some(w) => return Err(Error::Config(format!("{} weights for {members} members", w.len()))),
    };
    if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::Config("ensemble weights must be finite and non-negative".into()));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("ensemble weights sum to zero".into()));
    }
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Weighted mean of one coordinate, independent of member order: terms are
/// summed in sorted order and the result is kept inside the input range.
fn combine(values: &mut [(f64, f64)]) -> f64 {
    values.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mean: f64 = values.iter().map(|(x, w)| x * w).sum();
    mean.clamp(values[0].0, values[values.len() - 1].0)
}

/// Soft voting: per-item weighted mean of member outputs, in the first
/// member's item order. Probability vectors are renormalized to sum to 1.
/// Items on which every weighted member agrees bitwise are copied unchanged.
pub fn soft_vote(members: &[Vec<PredictionRecord>], weights: Option<&[f64]>) -> Result<Vec<PredictionRecord>> {
    let first = members.first().ok_or_else(|| Error::Config("soft voting needs at least one member".into()))?;
    let weights = normalized_weights(members.len(), weights)?;
    let task = first.first().map(|r| r.task);

    let mut indexed: Vec<HashMap<&str, &PredictionRecord>> = Vec::with_capacity(members.len());
    for (k, m) in members.iter().enumerate() {
        let mut map = HashMap::with_capacity(m.len());
        for r in m {
            if r.is_failed() {
                return Err(Error::Alignment(format!("member {k} has no prediction for {} ({})", r.id, r.error.as_deref().unwrap_or(""))));
            }
            r.check()
                .map_err(|m| Error::Config(format!("member {k}, item {}: {m}", r.id)))?;
            if Some(r.task) != task {
                return Err(Error::TaskMismatch {
                    expected: task.map_or("none".into(), |t| t.to_string()),
                    found: r.task.to_string(),
                });
            }
            if map.insert(r.id.as_str(), r).is_some() {
                return Err(Error::Alignment(format!("member {k} lists {} twice", r.id)));
            }
        }
        indexed.push(map);
    }
    for (k, map) in indexed.iter().enumerate().skip(1) {
        let mut missing: Vec<String> = first.iter().filter(|r| !map.contains_key(r.id.as_str())).map(|r| r.id.clone()).collect();
        missing.extend(members[k].iter().filter(|r| !indexed[0].contains_key(r.id.as_str())).map(|r| r.id.clone()));
        if !missing.is_empty() {
            return Err(Error::Alignment(format!("member {k} differs from member 0 on ids: {}", missing.join(", "))));
        }
    }

    let active: Vec<usize> = (0..members.len()).filter(|&k| weights[k] > 0.0).collect();
    let mut out = Vec::with_capacity(first.len());
    for rec in first {
        let votes: Vec<(&PredictionRecord, f64)> = active.iter().map(|&k| (indexed[k][rec.id.as_str()], weights[k])).collect();
        let unanimous = votes.iter().all(|(r, _)| r.probs == votes[0].0.probs && r.va_pair() == votes[0].0.va_pair());
        if unanimous {
            out.push(votes[0].0.clone());
            continue;
        }
        let coordinate = |extract: &dyn Fn(&PredictionRecord) -> f64| {
            let mut v: Vec<(f64, f64)> = votes.iter().map(|(r, w)| (extract(r), *w)).collect();
            combine(&mut v)
        };
        out.push(match rec.task {
            Task::Expr => {
                let dim = rec.probs.as_ref().map_or(0, Vec::len);
                let mut p: Vec<f64> = (0..dim).map(|c| coordinate(&|r| r.probs.as_ref().expect("checked")[c])).collect();
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= total);
                PredictionRecord::expr(rec.id.clone(), p)
            }
            Task::Va => PredictionRecord::va(
                rec.id.clone(),
                [coordinate(&|r| r.valence.expect("checked")), coordinate(&|r| r.arousal.expect("checked"))],
            ),
        });
    }
    Ok(out)
}
