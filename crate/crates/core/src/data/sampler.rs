use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Per-class sampling weight `1 / n_c`; zero for empty classes.
pub fn class_weights(counts: &[usize]) -> Vec<f64> {
    counts
        .iter()
        .map(|&n| if n == 0 { 0.0 } else { 1.0 / n as f64 })
        .collect()
}

/// Infinite index stream drawing each record with probability proportional to
/// `1 / n_class`: a uniform class, then a uniform record inside it.
#[derive(Clone, Debug)]
pub struct BalancedSampler {
    by_class: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
}

impl BalancedSampler {
    pub fn new(labels: &[usize], num_classes: usize, seed: u64) -> Result<Self> {
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class
                .get_mut(l)
                .ok_or(Error::Label { label: l, num_classes })?
                .push(i);
        }
        if let Some(class) = by_class.iter().position(Vec::is_empty) {
            return Err(Error::Coverage { class });
        }
        Ok(BalancedSampler {
            by_class,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Records laid out contiguously by class: class 0 owns `0..counts[0]`, and so on.
    pub fn from_counts(counts: &[usize], seed: u64) -> Result<Self> {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        Self::new(&labels, counts.len(), seed)
    }

    pub fn num_classes(&self) -> usize {
        self.by_class.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.by_class.iter().map(Vec::len).collect()
    }
}

impl Iterator for BalancedSampler {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let class = &self.by_class[self.rng.random_range(0..self.by_class.len())];
        Some(class[self.rng.random_range(0..class.len())])
    }
}

/// Seeded permutation of `0..n`, distinct per epoch.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}
