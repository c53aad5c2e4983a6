//! Reference implementations written independently of the library code,
//! plus the property sweeps shared by the unit-style tests and the
//! acceptance harness.
#![allow(dead_code)]

use dan_core::objectives::{affinity_loss, ccc, cross_entropy, focal_loss, macro_f1, ClassCenters, LossConfig};
use dan_core::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Population covariance through the pairwise form
/// `cov = 1/(2 n^2) sum_ij (x_i - x_j)(y_i - y_j)`, which never forms a mean.
pub fn pairwise_cov(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += (x[i] - x[j]) * (y[i] - y[j]);
        }
    }
    s / (2.0 * n * n)
}

pub fn oracle_ccc(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean_gap = x.iter().sum::<f64>() / n - y.iter().sum::<f64>() / n;
    let denom = pairwise_cov(x, x) + pairwise_cov(y, y) + mean_gap * mean_gap;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * pairwise_cov(x, y) / denom
    }
}

pub fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    pairwise_cov(x, y) / (pairwise_cov(x, x) * pairwise_cov(y, y)).sqrt()
}

/// Macro F1 from explicit true-positive / false-positive / false-negative
/// tallies.
pub fn oracle_macro_f1(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fneg = 0u64;
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == c, t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        if tp > 0 {
            total += (2 * tp) as f64 / (2 * tp + fp + fneg) as f64;
        }
    }
    total / k as f64
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let shift = rng.random_range(-5.0..5.0);
    (0..n).map(|_| shift + scale * rng.random_range(-1.0..1.0)).collect()
}

/// Correlated pair: `y = rho x + noise`, with random sign and strength.
pub fn random_pair(rng: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let x = random_vector(rng, n);
    let rho = rng.random_range(-2.0..2.0);
    let offset = rng.random_range(-3.0..3.0);
    let noise = 10f64.powf(rng.random_range(-3.0..1.0));
    let y = x.iter().map(|v| rho * v + offset + noise * rng.random_range(-1.0..1.0)).collect();
    (x, y)
}

pub fn random_simplex_rows(rng: &mut impl Rng, n: usize, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * k);
    for _ in 0..n {
        let sharp = rng.random_range(0.1..6.0);
        let w: Vec<f64> = (0..k).map(|_| (sharp * rng.random_range(-1.0..1.0f64)).exp()).collect();
        let s: f64 = w.iter().sum();
        out.extend(w.iter().map(|v| v / s));
    }
    out
}

/// Metric-oracle sweep. Returns one message per violation.
pub fn metric_oracle_failures(seed: u64) -> Vec<String> {
    let mut failures = Vec::new();
    let hand: [(&[f64], &[f64], f64); 4] = [
        (&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1.0),
        (&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], -1.0),
        (&[0.0, 0.0, 0.0], &[-1.0, 0.0, 1.0], 0.0),
        // s_xy = 2/3, s_x^2 = s_y^2 = 2/3, mean gap 1: 2(2/3) / (4/3 + 1)
        (&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], 4.0 / 7.0),
    ];
    for (x, y, expected) in hand {
        match ccc(x, y) {
            Ok(v) if (v - expected).abs() <= 1e-9 => {}
            other => failures.push(format!("ccc({x:?}, {y:?}) = {other:?}, expected {expected}")),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f1_mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let skew = rng.random_range(0.0..1.0);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.random_bool(skew) { t } else { rng.random_range(0..8) })
            .collect();
        let got = macro_f1(&pred, &truth, 8).unwrap();
        if got != oracle_macro_f1(&pred, &truth, 8) {
            f1_mismatches += 1;
        }
    }
    if f1_mismatches > 0 {
        failures.push(format!("macro_f1 differs from the confusion oracle on {f1_mismatches}/1000 pairs"));
    }

    let (mut oracle_bad, mut affine_bad, mut pearson_bad) = (0, 0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        let (x, y) = random_pair(&mut rng, n);
        let c = ccc(&x, &y).unwrap();
        if (c - oracle_ccc(&x, &y)).abs() > 1e-9 {
            oracle_bad += 1;
        }
        let a = loop {
            let a: f64 = rng.random_range(-4.0..4.0);
            if a.abs() > 0.05 {
                break a;
            }
        };
        let b = rng.random_range(-10.0..10.0);
        let map = |v: &[f64]| v.iter().map(|t| a * t + b).collect::<Vec<_>>();
        if (ccc(&map(&x), &map(&y)).unwrap() - c).abs() > 1e-9 {
            affine_bad += 1;
        }
        if c.abs() > oracle_pearson(&x, &y).abs() + 1e-9 {
            pearson_bad += 1;
        }
    }
    for (count, what) in [
        (oracle_bad, "ccc differs from the pairwise oracle"),
        (affine_bad, "ccc changes under a shared affine map"),
        (pearson_bad, "|ccc| exceeds |pearson|"),
    ] {
        if count > 0 {
            failures.push(format!("{what} on {count}/1000 vectors"));
        }
    }
    failures
}

/// Loss-identity sweep over random batches. Returns one message per violation.
pub fn loss_identity_failures(seed: u64, batches: usize) -> Vec<String> {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma0 = LossConfig {
        focal_gamma: 0.0,
        ..LossConfig::default()
    };
    let gamma2 = LossConfig::default();
    for b in 0..batches {
        let n = rng.random_range(1..33);
        let mut probs = random_simplex_rows(&mut rng, n, 8);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
        let certain = b % 10 == 0;
        if certain {
            for (i, &l) in labels.iter().enumerate() {
                probs[i * 8..(i + 1) * 8].iter_mut().enumerate().for_each(|(k, v)| *v = f64::from(k == l));
            }
        }
        let tape = Tape::<f64>::new();
        let p = tape.leaf(Tensor::from_f64(vec![n, 8], &probs).unwrap());
        let ce = cross_entropy(&p, &labels).unwrap().item();
        let f0 = focal_loss(&p, &labels, &gamma0).unwrap().item();
        let f2 = focal_loss(&p, &labels, &gamma2).unwrap().item();
        let direct_ce = -labels.iter().enumerate().map(|(i, &l)| probs[i * 8 + l].ln()).sum::<f64>() / n as f64;
        if (f0 - ce).abs() > 1e-9 || (ce - direct_ce).abs() > 1e-9 {
            failures.push(format!("batch {b}: focal(gamma=0) {f0} vs cross-entropy {ce} (direct {direct_ce})"));
        }
        let any_uncertain = labels.iter().enumerate().any(|(i, &l)| probs[i * 8 + l] < 1.0);
        let ok = if any_uncertain { f2 < ce } else { f2 <= ce };
        if !ok {
            failures.push(format!("batch {b}: focal(gamma=2) {f2} vs cross-entropy {ce}"));
        }
    }

    for b in 0..batches {
        let dim = rng.random_range(1..9);
        let n = rng.random_range(1..17);
        let rows: Vec<Option<Vec<f64>>> = (0..8)
            .map(|_| Some((0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()))
            .collect();
        let centers = ClassCenters::from_rows(dim, &rows).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
        let at_centers: Vec<f64> = labels.iter().flat_map(|&l| rows[l].clone().unwrap()).collect();
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_f64(vec![n, dim], &at_centers).unwrap());
        let loss = affinity_loss(&x, &labels, &centers).unwrap().item();
        if loss != 0.0 {
            failures.push(format!("batch {b}: affinity at centers is {loss}"));
        }
    }
    failures
}
