mod common;

use common::{oracle_ccc, oracle_macro_f1, oracle_pearson};
use dan_core::objectives::{
    affinity_loss, ccc, ccc_loss, combined_loss, cross_entropy, focal_loss, macro_f1, mean_ccc, partition_loss,
    ClassCenters, ConfusionMatrix, FocalAlpha, LossConfig, Targets,
};
use dan_core::model::{DanModel, ModelConfig, Task};
use dan_core::tensor::NormMode;
use dan_core::{Error, Tape, Tensor};
use proptest::prelude::*;

#[test]
fn metric_oracles_agree() {
    let failures = common::metric_oracle_failures(0);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn loss_identities_hold() {
    let failures = common::loss_identity_failures(0, 200);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn ccc_hand_cases() {
    assert_eq!(ccc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
    assert!((ccc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(ccc(&[0.0, 0.0, 0.0], &[-1.0, 0.0, 1.0]).unwrap(), 0.0);
    assert!(matches!(ccc(&[1.0], &[2.0]), Err(Error::SampleSize(_))));
    assert!(ccc(&[1.0, 2.0], &[1.0]).is_err());
    let (mean, [v, a]) = mean_ccc(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], &[[3.0, 1.0], [2.0, 2.0], [1.0, 3.0]]).unwrap();
    assert!((v + 1.0).abs() < 1e-12 && (a - 1.0).abs() < 1e-12 && mean.abs() < 1e-12);
}

#[test]
fn ccc_loss_hand_cases() {
    let tape = Tape::<f64>::new();
    let target = [[-0.5, 0.5], [0.0, 0.0], [0.5, -0.5]];
    let perfect = tape.leaf(Tensor::from_f64(vec![3, 2], &[-0.5, 0.5, 0.0, 0.0, 0.5, -0.5]).unwrap());
    assert!(ccc_loss(&perfect, &target).unwrap().item().abs() < 1e-12);
    // valence perfect, arousal anti-concordant
    let half = tape.leaf(Tensor::from_f64(vec![3, 2], &[-0.5, -0.5, 0.0, 0.0, 0.5, 0.5]).unwrap());
    assert!((ccc_loss(&half, &target).unwrap().item() - 1.0).abs() < 1e-12);
    assert!(matches!(
        ccc_loss(&tape.leaf(Tensor::zeros(vec![1, 2])), &[[0.0, 0.0]]),
        Err(Error::SampleSize(_))
    ));
}

#[test]
fn macro_f1_examples() {
    let all: Vec<usize> = (0..8).collect();
    assert_eq!(macro_f1(&all, &all, 8).unwrap(), 1.0);
    let wrong: Vec<usize> = all.iter().map(|c| (c + 3) % 8).collect();
    assert_eq!(macro_f1(&wrong, &all, 8).unwrap(), 0.0);
    let f1 = macro_f1(&[0, 1, 1, 1], &[0, 0, 1, 1], 8).unwrap();
    assert!((f1 - (2.0 / 3.0 + 4.0 / 5.0) / 8.0).abs() < 1e-15);
    assert!((f1 - 0.18333).abs() < 1e-5);
    assert!(matches!(macro_f1(&[], &[], 8), Err(Error::SampleSize(_))));
    let cm = ConfusionMatrix::new(&[0, 1, 1, 1], &[0, 0, 1, 1], 8).unwrap();
    assert_eq!((cm.get(0, 0), cm.get(0, 1), cm.get(1, 1), cm.get(1, 0)), (1, 1, 2, 0));
}

#[test]
fn focal_closed_form() {
    let tape = Tape::<f64>::new();
    let p = tape.leaf(Tensor::from_f64(vec![1, 2], &[0.9, 0.1]).unwrap());
    let loss = focal_loss(&p, &[0], &LossConfig::default()).unwrap().item();
    assert!((loss - 1.05361e-3).abs() < 1e-8);
    let certain = tape.leaf(Tensor::from_f64(vec![1, 2], &[1.0, 0.0]).unwrap());
    assert_eq!(focal_loss(&certain, &[0], &LossConfig::default()).unwrap().item(), 0.0);
    assert_eq!(cross_entropy(&certain, &[0]).unwrap().item(), 0.0);
    assert!(matches!(focal_loss(&p, &[5], &LossConfig::default()), Err(Error::Label { label: 5, .. })));
}

#[test]
fn probabilities_are_floored_before_log() {
    let tape = Tape::<f64>::new();
    let p = tape.leaf(Tensor::from_f64(vec![1, 2], &[1.0, 0.0]).unwrap());
    let ce = cross_entropy(&p, &[1]).unwrap().item();
    assert!((ce - -(1e-12f64.ln())).abs() < 1e-9);
}

#[test]
fn affinity_hand_example() {
    let tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::from_f64(vec![2, 1], &[0.0, 2.0]).unwrap());
    let mut rows = vec![None; 8];
    rows[0] = Some(vec![1.0]);
    rows[5] = Some(vec![-1.0]);
    let centers = ClassCenters::from_rows(1, &rows).unwrap();
    assert_eq!(centers.variance(), 1.0);
    let loss = affinity_loss(&x, &[0, 0], &centers).unwrap().item();
    assert!((loss - 1.0 / (1.0 + 1e-8)).abs() < 1e-15);
    let empty = tape.leaf(Tensor::zeros(vec![0, 1]));
    assert!(matches!(affinity_loss(&empty, &[], &centers), Err(Error::BatchSize(_))));
}

#[test]
fn affinity_gradient_reaches_features_only() {
    let tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::from_f64(vec![2, 1], &[0.0, 2.0]).unwrap());
    let rows = [Some(vec![1.0]), Some(vec![-1.0]), None, None, None, None, None, None];
    let centers = ClassCenters::from_rows(1, &rows).unwrap();
    let before = centers.clone();
    let loss = affinity_loss(&x, &[0, 0], &centers).unwrap();
    tape.backward(loss).unwrap();
    // d/dx (x - 1)^2 / (2 (1 + eps))
    let g = x.grad().unwrap();
    assert!((g.data()[0] + 1.0 / (1.0 + 1e-8)).abs() < 1e-12);
    assert!((g.data()[1] - 1.0 / (1.0 + 1e-8)).abs() < 1e-12);
    assert_eq!(centers, before);
}

#[test]
fn center_updates_follow_moving_average() {
    let rows = [Some(vec![0.0, 0.0]), None, None, None, None, None, None, None];
    let mut centers = ClassCenters::from_rows(2, &rows).unwrap();
    let features = Tensor::<f64>::from_f64(vec![3, 2], &[2.0, 4.0, 4.0, 8.0, 1.0, 1.0]).unwrap();
    centers.update(&features, &[0, 0, 3], 0.5).unwrap();
    assert_eq!(centers.row(0).unwrap(), &[1.5, 3.0]);
    assert_eq!(centers.row(3).unwrap(), &[1.0, 1.0]);
    assert!(centers.row(1).is_none());
}

#[test]
fn partition_examples() {
    let tape = Tape::<f64>::new();
    let a = tape.leaf(Tensor::from_f64(vec![2, 3], &[0.0; 6]).unwrap());
    let b = tape.leaf(Tensor::from_f64(vec![2, 3], &[2.0; 6]).unwrap());
    assert!((partition_loss(&[a, b]).unwrap().item() - 0.5).abs() < 1e-8);
    assert_eq!(partition_loss(&[a, a, a]).unwrap().item(), 1.0);
    assert_eq!(partition_loss(&[b]).unwrap().item(), 1.0);
    let c = tape.leaf(Tensor::from_f64(vec![2, 3], &[4.0; 6]).unwrap());
    assert!(partition_loss(&[a, c]).unwrap().item() < partition_loss(&[a, b]).unwrap().item());
}

#[test]
fn combined_loss_composition() {
    let mut model = DanModel::<f64>::new(ModelConfig::tiny(Task::Expr)).unwrap();
    let images = Tensor::from_f64(
        vec![4, 3, 16, 16],
        &(0..4 * 3 * 256).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect::<Vec<_>>(),
    )
    .unwrap();
    let labels = [0, 3, 3, 7];
    let dim = ModelConfig::tiny(Task::Expr).feature_dim();
    let rows: Vec<Option<Vec<f64>>> = (0..8).map(|k| Some(vec![k as f64 * 0.1; dim])).collect();
    let centers = ClassCenters::from_rows(dim, &rows).unwrap();
    let tape = Tape::new();
    let out = model.forward(&tape, &images, NormMode::Train).unwrap();
    let cfg = LossConfig::default();
    let parts = combined_loss(&out, Targets::Expr(&labels), &cfg, &centers).unwrap();
    let probs = out.prediction.output();
    let focal = focal_loss(&probs, &labels, &cfg).unwrap().item();
    let affinity = affinity_loss(&out.backbone_features, &labels, &centers).unwrap().item();
    let heads: Vec<_> = out.heads.iter().map(|h| h.features).collect();
    let partition = partition_loss(&heads).unwrap().item();
    assert!((parts.total.item() - (focal + affinity + partition)).abs() < 1e-9);

    let zero = LossConfig {
        lambda_affinity: 0.0,
        lambda_partition: 0.0,
        ..cfg.clone()
    };
    let only = combined_loss(&out, Targets::Expr(&labels), &zero, &centers).unwrap();
    assert_eq!(only.total.item(), focal);
    assert!(combined_loss(&out, Targets::Va(&[[0.0, 0.0]; 4]), &cfg, &centers).is_err());
}

#[test]
fn loss_config_defaults_and_validation() {
    let d = LossConfig::default();
    assert_eq!((d.focal_gamma, d.lambda_affinity, d.lambda_partition, d.affinity_center_lr), (2.0, 1.0, 1.0, 0.5));
    assert_eq!(d.focal_alpha, FocalAlpha::Uniform(1.0));
    assert_eq!(LossConfig::for_task(Task::Va).lambda_affinity, 0.0);
    for bad in [
        LossConfig { focal_gamma: -1.0, ..d.clone() },
        LossConfig { lambda_affinity: f64::NAN, ..d.clone() },
        LossConfig { affinity_center_lr: 0.0, ..d.clone() },
        LossConfig { focal_alpha: FocalAlpha::PerClass(vec![1.0; 7]), ..d.clone() },
        LossConfig { focal_alpha: FocalAlpha::PerClass(vec![-1.0; 8]), ..d.clone() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ccc_symmetric_and_bounded(seed in any::<u64>(), n in 2usize..40) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = common::random_pair(&mut rng, n);
        let c = ccc(&x, &y).unwrap();
        prop_assert_eq!(c, ccc(&y, &x).unwrap());
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert!((c - oracle_ccc(&x, &y)).abs() < 1e-9);
        prop_assert!(c.abs() <= oracle_pearson(&x, &y).abs() + 1e-9);
        if x.iter().any(|v| *v != x[0]) {
            prop_assert!((ccc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn macro_f1_matches_oracle_and_is_permutation_invariant(
        pairs in proptest::collection::vec((0usize..8, 0usize..8), 1..60),
        rotate in 0usize..60,
    ) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let f = macro_f1(&pred, &truth, 8).unwrap();
        prop_assert_eq!(f, oracle_macro_f1(&pred, &truth, 8));
        let mut rotated = pairs.clone();
        rotated.rotate_left(rotate % pairs.len());
        let (p2, t2): (Vec<usize>, Vec<usize>) = rotated.into_iter().unzip();
        prop_assert_eq!(f, macro_f1(&p2, &t2, 8).unwrap());
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn focal_is_batch_permutation_invariant(seed in any::<u64>(), n in 1usize..12, shift in 0usize..12) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let probs = common::random_simplex_rows(&mut rng, n, 8);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
        let s = shift % n;
        let mut rows: Vec<&[f64]> = probs.chunks(8).collect();
        rows.rotate_left(s);
        let mut rl = labels.clone();
        rl.rotate_left(s);
        let flat: Vec<f64> = rows.concat();
        let tape = Tape::<f64>::new();
        let a = focal_loss(&tape.leaf(Tensor::from_f64(vec![n, 8], &probs).unwrap()), &labels, &LossConfig::default()).unwrap().item();
        let b = focal_loss(&tape.leaf(Tensor::from_f64(vec![n, 8], &flat).unwrap()), &rl, &LossConfig::default()).unwrap().item();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn affinity_nonnegative_and_scale_invariant(seed in any::<u64>(), n in 1usize..10, dim in 1usize..6, s in 0.01f64..100.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Option<Vec<f64>>> = (0..8)
            .map(|k| (k < 3 || rng.random_bool(0.5)).then(|| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()))
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let feats: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let centers = ClassCenters::from_rows(dim, &rows).unwrap();
        let scaled_rows: Vec<Option<Vec<f64>>> = rows.iter().map(|r| r.as_ref().map(|v| v.iter().map(|x| x * s).collect())).collect();
        let scaled_centers = ClassCenters::from_rows(dim, &scaled_rows).unwrap();
        let tape = Tape::<f64>::new();
        let l = affinity_loss(&tape.leaf(Tensor::from_f64(vec![n, dim], &feats).unwrap()), &labels, &centers).unwrap().item();
        let scaled: Vec<f64> = feats.iter().map(|x| x * s).collect();
        let ls = affinity_loss(&tape.leaf(Tensor::from_f64(vec![n, dim], &scaled).unwrap()), &labels, &scaled_centers).unwrap().item();
        prop_assert!(l >= 0.0);
        // Exact scale law with the 1e-8 denominator epsilon: scaling both sides by s
        // maps N / (V + e) to s^2 N / (s^2 V + e).
        let (var, eps) = (centers.variance(), 1e-8);
        let expected = l * s * s * (var + eps) / (s * s * var + eps);
        prop_assert!((ls - expected).abs() <= 1e-9 * expected.max(1e-12), "{} vs {}", ls, expected);
        if var * s * s > 1e-2 && var > 1e-2 {
            prop_assert!((l - ls).abs() <= 1e-5 * l.max(1e-12), "{} vs {}", l, ls);
        }
    }
}

mod affinity {
    use dan_core::objectives::*;
    use dan_core::{Tape, Tensor};

    #[test]
    fn hand_example() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_f64(vec![2, 1], &[0.0, 2.0]).unwrap());
        let mut rows = vec![None; 8];
        rows[0] = Some(vec![1.0]);
        rows[3] = Some(vec![-1.0]);
        let centers = ClassCenters::from_rows(1, &rows).unwrap();
        assert_eq!(centers.variance(), 1.0);
        let loss = affinity_loss(&x, &[0, 0], &centers).unwrap().item();
        assert!((loss - 2.0 / 2.0 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_at_centers() {
        let tape = Tape::<f64>::new();
        let rows = vec![Some(vec![1.0, 2.0]), Some(vec![-3.0, 0.5])];
        let centers = ClassCenters::from_rows(2, &rows).unwrap();
        let x = tape.leaf(Tensor::from_f64(vec![3, 2], &[1.0, 2.0, -3.0, 0.5, 1.0, 2.0]).unwrap());
        assert_eq!(affinity_loss(&x, &[0, 1, 0], &centers).unwrap().item(), 0.0);
    }

    #[test]
    fn ema_update_and_first_sighting() {
        let mut c = ClassCenters::new(2, 1);
        let f = Tensor::<f64>::from_f64(vec![2, 1], &[2.0, 4.0]).unwrap();
        c.update(&f, &[0, 0], 0.5).unwrap();
        assert_eq!(c.row(0), Some(&[3.0][..]));
        assert_eq!(c.row(1), None);
        let f = Tensor::<f64>::from_f64(vec![1, 1], &[5.0]).unwrap();
        c.update(&f, &[0], 0.5).unwrap();
        assert_eq!(c.row(0), Some(&[4.0][..]));
    }

    #[test]
    fn fewer_than_two_centers_is_constant_zero() {
        let tape = Tape::<f64>::new();
        let c = ClassCenters::from_rows(1, &[Some(vec![0.0]), None]).unwrap();
        let x = tape.leaf(Tensor::from_f64(vec![1, 1], &[3.0]).unwrap());
        let l = affinity_loss(&x, &[0], &c).unwrap();
        assert_eq!(l.item(), 0.0);
        assert!(!l.requires_grad());
    }

    #[test]
    fn va_bins_cover_grid() {
        assert_eq!(va_bin(-1.0, -1.0), 0);
        assert_eq!(va_bin(1.0, 1.0), 8);
        assert_eq!(va_bin(0.0, -0.9), 3);
    }
}

mod partition {
    use dan_core::objectives::*;
    use dan_core::{Tape, Tensor};

    #[test]
    fn identical_heads_give_one() {
        let tape = Tape::<f64>::new();
        let h = tape.leaf(Tensor::from_f64(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        assert_eq!(partition_loss(&[h, h, h]).unwrap().item(), 1.0);
        assert_eq!(partition_loss(&[h]).unwrap().item(), 1.0);
    }

    #[test]
    fn unit_variance_gives_half() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(vec![3, 4]));
        let b = tape.leaf(Tensor::full(vec![3, 4], 2.0));
        assert_eq!(partition_loss(&[a, b]).unwrap().item(), 0.5);
    }

    #[test]
    fn more_spread_means_lower_loss() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(vec![1, 2]));
        let near = tape.leaf(Tensor::full(vec![1, 2], 1.0));
        let far = tape.leaf(Tensor::full(vec![1, 2], 3.0));
        assert!(partition_loss(&[a, far]).unwrap().item() < partition_loss(&[a, near]).unwrap().item());
    }
}

mod focal {
    use dan_core::objectives::*;
    use dan_core::{Error, Tape, Tensor, Var};
    use dan_core::objectives::FocalAlpha;

    fn probs<'t>(tape: &'t Tape<f64>, rows: &[&[f64]]) -> Var<'t, f64> {
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        tape.leaf(Tensor::from_f64(vec![rows.len(), rows[0].len()], &data).unwrap())
    }

    #[test]
    fn single_sample_closed_form() {
        let tape = Tape::new();
        let p = probs(&tape, &[&[0.9, 0.1]]);
        let loss = focal_loss(&p, &[0], &LossConfig::default()).unwrap().item();
        let expect = 0.01 * -(0.9f64.ln());
        assert!((loss - expect).abs() < 1e-15);
        assert!((loss - 1.05361e-3).abs() < 1e-8);
    }

    #[test]
    fn gamma_zero_is_cross_entropy() {
        let tape = Tape::new();
        let p = probs(&tape, &[&[0.7, 0.2, 0.1], &[0.3, 0.3, 0.4]]);
        let cfg = LossConfig {
            focal_gamma: 0.0,
            ..LossConfig::default()
        };
        let f = focal_loss(&p, &[0, 2], &cfg).unwrap().item();
        let ce = -(0.7f64.ln() + 0.4f64.ln()) / 2.0;
        assert_eq!(f, cross_entropy(&p, &[0, 2]).unwrap().item());
        assert!((f - ce).abs() < 1e-15);
    }

    #[test]
    fn certain_prediction_costs_nothing() {
        let tape = Tape::new();
        let p = probs(&tape, &[&[0.0, 1.0]]);
        assert_eq!(focal_loss(&p, &[1], &LossConfig::default()).unwrap().item(), 0.0);
    }

    #[test]
    fn per_class_alpha_scales_terms() {
        let tape = Tape::new();
        let p = probs(&tape, &[&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]]);
        let base = focal_loss(&p, &[1], &LossConfig::default()).unwrap().item();
        let mut w = vec![1.0; 8];
        w[1] = 3.0;
        let cfg = LossConfig {
            focal_alpha: FocalAlpha::PerClass(w),
            ..LossConfig::default()
        };
        assert!((focal_loss(&p, &[1], &cfg).unwrap().item() - 3.0 * base).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_label() {
        let tape = Tape::new();
        let p = probs(&tape, &[&[0.5, 0.5]]);
        assert!(matches!(
            focal_loss(&p, &[2], &LossConfig::default()),
            Err(Error::Label { label: 2, .. })
        ));
    }
}

mod f1 {
    use dan_core::objectives::*;
    use dan_core::Error;

    #[test]
    fn perfect_and_hopeless() {
        let labels: Vec<usize> = (0..8).collect();
        assert_eq!(macro_f1(&labels, &labels, 8).unwrap(), 1.0);
        let shifted: Vec<usize> = labels.iter().map(|l| (l + 1) % 8).collect();
        assert_eq!(macro_f1(&shifted, &labels, 8).unwrap(), 0.0);
    }

    #[test]
    fn binary_style_case() {
        let f1 = macro_f1(&[0, 1, 1, 1], &[0, 0, 1, 1], 8).unwrap();
        assert!((f1 - (2.0 / 3.0 + 0.8) / 8.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(macro_f1(&[], &[], 8), Err(Error::SampleSize(_))));
        assert!(matches!(macro_f1(&[8], &[0], 8), Err(Error::Label { .. })));
    }
}

mod loss_config {
    use dan_core::objectives::*;

    #[test]
    fn alpha_accepts_scalar_or_vector_json() {
        let c: LossConfig = serde_json::from_str(
            r#"{"focal_gamma":2,"focal_alpha":[1,1,1,1,2,1,1,1],"lambda_affinity":0,"lambda_partition":1,"affinity_center_lr":0.5}"#,
        )
        .unwrap();
        assert_eq!(c.focal_alpha.weight(4), 2.0);
        c.validate().unwrap();
        let bad = LossConfig {
            focal_alpha: FocalAlpha::PerClass(vec![1.0; 3]),
            ..LossConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(LossConfig { affinity_center_lr: 0.0, ..LossConfig::default() }.validate().is_err());
    }
}

mod ccc {
    use dan_core::objectives::*;
    use dan_core::{Error, Tape, Tensor};

    #[test]
    fn hand_cases() {
        assert_eq!(ccc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!((ccc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(ccc(&[0.0, 0.0, 0.0], &[-1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ccc(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert!(matches!(ccc(&[1.0], &[1.0]), Err(Error::SampleSize(_))));
    }

    #[test]
    fn loss_cases() {
        let tape = Tape::<f64>::new();
        let rows = [[-0.5, -0.5], [0.0, 0.0], [0.5, 0.5]];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let p = tape.leaf(Tensor::from_f64(vec![3, 2], &flat).unwrap());
        assert!(ccc_loss(&p, &rows).unwrap().item().abs() < 1e-12);
        let anti = [[-0.5, 0.5], [0.0, 0.0], [0.5, -0.5]];
        assert!((ccc_loss(&p, &anti).unwrap().item() - 1.0).abs() < 1e-12);
        assert!(ccc_loss(&p, &[[2.0, 0.0], [0.0, 0.0], [0.0, 0.0]]).is_err());
    }
}

