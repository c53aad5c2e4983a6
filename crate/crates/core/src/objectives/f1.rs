use crate::error::{Error, Result};

/// Counts indexed `[true][pred]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::dim(
                "length",
                format!("{} predictions for {} labels", pred.len(), truth.len()),
            ));
        }
        if pred.is_empty() {
            return Err(Error::SampleSize("F1 needs at least one sample".into()));
        }
        let mut counts = vec![0; num_classes * num_classes];
        for (&p, &t) in pred.iter().zip(truth) {
            if p >= num_classes || t >= num_classes {
                return Err(Error::Label {
                    label: p.max(t),
                    num_classes,
                });
            }
            counts[t * num_classes + p] += 1;
        }
        Ok(ConfusionMatrix { num_classes, counts })
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    /// Per-class F1; a class with no true positives scores 0, including
    /// classes absent from both predictions and labels.
    pub fn per_class_f1(&self) -> Vec<f64> {
        let k = self.num_classes;
        (0..k)
            .map(|c| {
                let tp = self.get(c, c);
                let predicted: u64 = (0..k).map(|t| self.get(t, c)).sum();
                let actual: u64 = (0..k).map(|p| self.get(c, p)).sum();
                if tp == 0 {
                    return 0.0;
                }
                // 2PR / (P + R) with a single rounding.
                (2 * tp) as f64 / (predicted + actual) as f64
            })
            .collect()
    }

    pub fn macro_f1(&self) -> f64 {
        self.per_class_f1().iter().sum::<f64>() / self.num_classes as f64
    }
}

/// Unweighted mean of per-class F1 over all `num_classes` classes.
pub fn macro_f1(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    Ok(ConfusionMatrix::new(pred, truth, num_classes)?.macro_f1())
}
