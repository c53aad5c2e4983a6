//! Randomized finite-difference suite over every differentiable op and loss.
//!
//! Each check draws small random shapes and values at 64-bit, reduces the
//! output to a scalar through a fixed random projection, and compares tape
//! gradients with central differences for every argument.

use std::cell::RefCell;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{attention_fusion, Bound, DanModel, ModelConfig, ParamId, Task};
use crate::objectives::{
    affinity_loss, ccc_loss, combined_loss, cross_entropy, focal_loss, partition_loss, ClassCenters, LossConfig,
    Targets, VA_BINS,
};
use crate::tensor::{BatchNormState, NormMode, Tape, Tensor, Var};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Inputs of piecewise ops are kept this far from their kinks, where the
/// derivative is undefined and central differences straddle two branches.
const KINK_MARGIN: f64 = 1e-2;
/// Gradient magnitude, per unit of function value, below which errors are
/// measured absolutely. Rounding noise in a central difference grows with |f|.
const GRADIENT_FLOOR: f64 = 1e-4;
/// Coordinates probed per argument when an argument is larger than this.
const MAX_COORDS: usize = 24;

#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    pub instances: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            instances: 20,
            seed: 0,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckSummary {
    pub name: &'static str,
    pub instances: usize,
    pub failures: usize,
    /// Coordinates compared against finite differences.
    pub coordinates: usize,
    /// Coordinates whose probes straddled a relu, max-pool or clamp kink.
    pub skipped: usize,
    pub max_rel_err: f64,
}

impl CheckSummary {
    /// No failures, and kinks hid at most a tenth of the probed coordinates.
    pub fn pass(&self) -> bool {
        self.failures == 0 && self.coordinates > 0 && self.skipped * 10 <= self.coordinates + self.skipped
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<CheckSummary>,
    pub elapsed_ms: u64,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(CheckSummary::pass)
    }
}

type ArgFn = dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>;

/// A scalar function of its argument tensors.
struct Case {
    args: Vec<Tensor<f64>>,
    f: Box<ArgFn>,
}

enum Check {
    Op(Case),
    Model(Box<ModelCase>),
}

fn case(args: Vec<Tensor<f64>>, f: impl for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>> + 'static) -> Check {
    Check::Op(Case { args, f: Box::new(f) })
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Uniform in `[-hi, hi]` but at least `KINK_MARGIN` away from `at`.
fn away_from(rng: &mut ChaCha8Rng, shape: &[usize], at: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.random_range(KINK_MARGIN..hi);
            if rng.random::<bool>() {
                at + mag
            } else {
                at - mag
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Scalar `sum(out * R)` with `R` drawn from `seed`; identical on every call.
fn project<'t>(tape: &'t Tape<f64>, out: Var<'t, f64>, seed: u64) -> Result<Var<'t, f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = uniform(&mut rng, &out.shape(), -1.0, 1.0);
    Ok(out.mul(&tape.constant(r))?.sum())
}

fn probe_coords(len: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    (len > MAX_COORDS).then(|| {
        let mut all: Vec<usize> = (0..len).collect();
        all.shuffle(rng);
        all.truncate(MAX_COORDS);
        all.sort_unstable();
        all
    })
}

/// `|a - b|` relative to the larger magnitude, but never to less than
/// `GRADIENT_FLOOR * max(1, |f|)`: exactly-zero gradients (a bias feeding
/// batch norm) are compared absolutely against finite-difference noise.
fn scaled_error(a: f64, b: f64, f: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRADIENT_FLOOR * f.abs().max(1.0))
}

#[derive(Clone, Copy, Debug, Default)]
struct Probe {
    worst: f64,
    coordinates: usize,
    skipped: usize,
}

impl Probe {
    fn merge(&mut self, other: Probe) {
        self.worst = self.worst.max(other.worst);
        self.coordinates += other.coordinates;
        self.skipped += other.skipped;
    }
}

/// Function value plus the branch signature of the pass that produced it.
type Evaluation = (f64, u64);

/// Worst [`scaled_error`] between `analytic` and central differences of
/// `value_at`. A coordinate is skipped when either probe lands on a different
/// branch than `base`: the difference then spans a point where the function
/// has no derivative.
fn compare(
    analytic: &Tensor<f64>,
    x: &Tensor<f64>,
    base: u64,
    mut value_at: impl FnMut(&Tensor<f64>) -> Result<Evaluation>,
    step: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Probe> {
    let coords = probe_coords(x.len(), rng).unwrap_or_else(|| (0..x.len()).collect());
    let mut probe = x.clone();
    let mut out = Probe::default();
    for i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let (plus, plus_branch) = value_at(&probe)?;
        probe.data_mut()[i] = orig - step;
        let (minus, minus_branch) = value_at(&probe)?;
        probe.data_mut()[i] = orig;
        if plus_branch != base || minus_branch != base {
            out.skipped += 1;
            continue;
        }
        out.coordinates += 1;
        let err = scaled_error(analytic.data()[i], (plus - minus) / (2.0 * step), plus);
        // NaN must count as a failure.
        out.worst = if err.is_nan() { f64::INFINITY } else { out.worst.max(err) };
    }
    Ok(out)
}

/// Worst error over all arguments of one case.
fn run_case(c: &Case, opts: &SuiteOptions, rng: &mut ChaCha8Rng) -> Result<Probe> {
    let tape = Tape::new();
    let vars: Vec<Var<'_, f64>> = c.args.iter().map(|a| tape.leaf(a.clone())).collect();
    let out = (c.f)(&tape, &vars)?;
    let base = tape.branch_signature();
    tape.backward(out)?;
    let mut total = Probe::default();
    for (i, arg) in c.args.iter().enumerate() {
        let analytic = vars[i].grad().unwrap_or_else(|| Tensor::zeros(arg.shape().to_vec()));
        let probe = compare(
            &analytic,
            arg,
            base,
            |probe| {
                let tape = Tape::new();
                let vars: Vec<Var<'_, f64>> = c
                    .args
                    .iter()
                    .enumerate()
                    .map(|(j, a)| tape.constant(if j == i { probe.clone() } else { a.clone() }))
                    .collect();
                let value = (c.f)(&tape, &vars)?.item();
                Ok((value, tape.branch_signature()))
            },
            opts.step,
            rng,
        )?;
        total.merge(probe);
    }
    Ok(total)
}

type Generator = fn(&mut ChaCha8Rng, u64) -> Check;

fn conv2d_case(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let n = rng.random_range(1..=2);
    let (cin, cout) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let k = rng.random_range(1..=3);
    let stride = rng.random_range(1..=2);
    let mut pad = rng.random_range(0..=1);
    let out = rng.random_range(2..=4);
    let mut h = ((out - 1) * stride + k) as isize - 2 * pad as isize;
    if h < 1 {
        pad = 0;
        h = ((out - 1) * stride + k) as isize;
    }
    let h = h as usize;
    let args = vec![
        uniform(rng, &[n, cin, h, h], -1.0, 1.0),
        uniform(rng, &[cout, cin, k, k], -1.0, 1.0),
        uniform(rng, &[cout], -1.0, 1.0),
    ];
    case(args, move |t, v| project(t, v[0].conv2d(&v[1], &v[2], stride, pad)?, seed))
}

fn dense_case(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let (n, f, g) = (rng.random_range(1..=4), rng.random_range(1..=7), rng.random_range(1..=5));
    let args = vec![
        uniform(rng, &[n, f], -1.0, 1.0),
        uniform(rng, &[f, g], -1.0, 1.0),
        uniform(rng, &[g], -1.0, 1.0),
    ];
    case(args, move |t, v| project(t, v[0].dense(&v[1], &v[2])?, seed))
}

fn norm_shape(rng: &mut ChaCha8Rng) -> (Vec<usize>, usize) {
    let n = rng.random_range(2..=4);
    let c = rng.random_range(1..=3);
    if rng.random::<bool>() {
        (vec![n, c], c)
    } else {
        (vec![n, c, rng.random_range(1..=3), rng.random_range(1..=3)], c)
    }
}

fn batchnorm_case(rng: &mut ChaCha8Rng, seed: u64, mode: NormMode) -> Check {
    let (shape, c) = norm_shape(rng);
    let mut state = BatchNormState::new(c);
    state.running_mean = uniform(rng, &[c], -0.5, 0.5);
    state.running_var = uniform(rng, &[c], 0.5, 2.0);
    let args = vec![uniform(rng, &shape, -2.0, 2.0), uniform(rng, &[c], 0.5, 1.5), uniform(rng, &[c], -0.5, 0.5)];
    case(args, move |t, v| {
        // Train mode writes running stats; they never feed back into its output.
        let mut st = state.clone();
        project(t, v[0].batchnorm(&v[1], &v[2], &mut st, mode, 0.1, 1e-5)?, seed)
    })
}

fn small_shape(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let rank = rng.random_range(1..=4);
    (0..rank).map(|_| rng.random_range(1..=3)).collect()
}

fn unary_case(rng: &mut ChaCha8Rng, seed: u64, kind: u8) -> Check {
    let shape = small_shape(rng);
    let x = match kind {
        0 => away_from(rng, &shape, 0.0, 2.0),
        4 => uniform(rng, &shape, 0.3, 3.0),
        _ => uniform(rng, &shape, -2.0, 2.0),
    };
    case(vec![x], move |t, v| {
        let y = match kind {
            0 => v[0].relu(),
            1 => v[0].sigmoid(),
            2 => v[0].tanh(),
            3 => v[0].exp(),
            4 => v[0].ln(),
            _ => v[0].neg().square().scale(0.7).add_scalar(0.3),
        };
        project(t, y, seed)
    })
}

fn softmax_case(rng: &mut ChaCha8Rng, seed: u64, log: bool) -> Check {
    let shape = small_shape(rng);
    let axis = rng.random_range(0..shape.len());
    case(vec![uniform(rng, &shape, -3.0, 3.0)], move |t, v| {
        let y = if log { v[0].log_softmax(axis)? } else { v[0].softmax(axis)? };
        project(t, y, seed)
    })
}

fn max_pool_case(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let (n, c) = (rng.random_range(1..=2), rng.random_range(1..=2));
    let window = rng.random_range(2..=3);
    let stride = rng.random_range(1..=window);
    let h = rng.random_range(window..=window + 3);
    let w = rng.random_range(window..=window + 3);
    // Distinct values on a 0.1 grid plus small noise: no near-ties inside any window.
    let mut grid: Vec<f64> = (0..n * c * h * w).map(|i| i as f64 * 0.1).collect();
    grid.shuffle(rng);
    for g in grid.iter_mut() {
        *g += rng.random_range(-0.02..0.02);
    }
    let x = Tensor::new(vec![n, c, h, w], grid).expect("shape");
    case(vec![x], move |t, v| project(t, v[0].max_pool(window, stride)?, seed))
}

fn global_avg_pool_case(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let shape = [rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4)];
    case(vec![uniform(rng, &shape, -1.0, 1.0)], move |t, v| project(t, v[0].global_avg_pool()?, seed))
}

fn binary_case(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let shape = small_shape(rng);
    // Broadcast the second operand along a random subset of axes.
    let other: Vec<usize> = shape.iter().map(|&d| if rng.random::<bool>() { 1 } else { d }).collect();
    let kind = rng.random_range(0..4u8);
    let b = if kind == 3 {
        let mut t = uniform(rng, &other, 0.5, 2.0);
        t.data_mut().iter_mut().for_each(|x| {
            if rng.random::<bool>() {
                *x = -*x
            }
        });
        t
    } else {
        uniform(rng, &other, -1.5, 1.5)
    };
    case(vec![uniform(rng, &shape, -1.5, 1.5), b], move |t, v| {
        let y = match kind {
            0 => v[0].add(&v[1])?,
            1 => v[0].sub(&v[1])?,
            2 => v[0].mul(&v[1])?,
            _ => v[0].div(&v[1])?,
        };
        project(t, y, seed)
    })
}

fn pow_case(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let shape = small_shape(rng);
    let exponent = *[0.5, 1.5, 2.0, 3.0, -1.0, 2.5].choose(rng).expect("non-empty");
    case(vec![uniform(rng, &shape, 0.3, 2.0)], move |t, v| project(t, v[0].pow_scalar(exponent), seed))
}

fn clamp_case(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let shape = small_shape(rng);
    let floor = rng.random_range(-0.5..0.5);
    case(vec![away_from(rng, &shape, floor, 2.0)], move |t, v| project(t, v[0].clamp_min(floor), seed))
}

fn reduce_case(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let shape = small_shape(rng);
    let axis = rng.random_range(0..shape.len());
    let keep = rng.random::<bool>();
    let mean = rng.random::<bool>();
    case(vec![uniform(rng, &shape, -1.0, 1.0)], move |t, v| {
        let y = if mean { v[0].mean_axis(axis, keep)? } else { v[0].sum_axis(axis, keep)? };
        let s = project(t, y, seed)?;
        s.add(&v[0].mean().scale(0.5))
    })
}

fn shape_ops_case(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let (n, f) = (rng.random_range(2..=4), rng.random_range(1..=4));
    let columns: Vec<usize> = (0..2 * n).map(|_| rng.random_range(0..f)).collect();
    let column = rng.random_range(0..f);
    let args = vec![uniform(rng, &[n, f], -1.0, 1.0), uniform(rng, &[n, f], -1.0, 1.0)];
    case(args, move |t, v| {
        let stacked = t.stack(&[v[0], v[1]], 0)?;
        let flat = stacked.reshape(vec![2 * n, f])?;
        let picked = flat.gather_rows(&columns)?;
        let col = v[1].select(1, column)?;
        project(t, picked, seed)?.add(&project(t, col, seed ^ 1)?)
    })
}

fn focal_case(rng: &mut ChaCha8Rng, _seed: u64) -> Check {
    let n = rng.random_range(1..=5);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
    let cfg = LossConfig {
        focal_gamma: *[0.0, 1.0, 2.0, 3.5].choose(rng).expect("non-empty"),
        ..LossConfig::default()
    };
    case(vec![uniform(rng, &[n, 8], -2.0, 2.0)], move |_, v| focal_loss(&v[0].softmax(1)?, &labels, &cfg))
}

fn cross_entropy_case(rng: &mut ChaCha8Rng, _seed: u64) -> Check {
    let n = rng.random_range(1..=5);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
    case(vec![uniform(rng, &[n, 8], -2.0, 2.0)], move |_, v| cross_entropy(&v[0].softmax(1)?, &labels))
}

fn affinity_case(rng: &mut ChaCha8Rng, _seed: u64) -> Check {
    let (n, f) = (rng.random_range(1..=6), rng.random_range(1..=5));
    let rows: Vec<Option<Vec<f64>>> = (0..8)
        .map(|k| (k < 2 || rng.random::<bool>()).then(|| (0..f).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    let centers = ClassCenters::from_rows(f, &rows).expect("rows");
    let keys: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
    case(vec![uniform(rng, &[n, f], -1.5, 1.5)], move |_, v| affinity_loss(&v[0], &keys, &centers))
}

fn partition_case(rng: &mut ChaCha8Rng, _seed: u64) -> Check {
    let heads = rng.random_range(1..=4);
    let (n, f) = (rng.random_range(1..=3), rng.random_range(1..=4));
    let args = (0..heads).map(|_| uniform(rng, &[n, f], -1.0, 1.0)).collect();
    case(args, |_, v| partition_loss(v))
}

fn ccc_case(rng: &mut ChaCha8Rng, _seed: u64) -> Check {
    let n = rng.random_range(2..=8);
    let target: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    case(vec![uniform(rng, &[n, 2], -0.9, 0.9)], move |_, v| ccc_loss(&v[0], &target))
}

fn tiny_config(rng: &mut ChaCha8Rng, task: Task) -> ModelConfig {
    ModelConfig {
        seed: rng.random(),
        reduction: 2,
        ..ModelConfig::tiny(task)
    }
}

/// Tiny model whose zero-initialized biases and unit norm scales are
/// jittered, so no activation starts exactly on a relu kink.
fn tiny_model(rng: &mut ChaCha8Rng, task: Task) -> DanModel<f64> {
    let mut model = DanModel::<f64>::new(tiny_config(rng, task)).expect("valid config");
    for p in model.params_mut().iter_mut() {
        if p.name.ends_with(".bias") || p.name.ends_with(".beta") || p.name.ends_with(".gamma") {
            p.value.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
        }
    }
    model
}

fn fusion_case(rng: &mut ChaCha8Rng, seed: u64) -> Check {
    let heads = rng.random_range(1..=4);
    let (n, f) = (rng.random_range(1..=2), rng.random_range(1..=8));
    let args = (0..heads).map(|_| uniform(rng, &[n, f], -1.0, 1.0)).collect();
    case(args, move |t, v| project(t, attention_fusion(t, v)?, seed))
}

/// Model pieces take a feature map or images as the single argument.
fn model_case(rng: &mut ChaCha8Rng, seed: u64, part: u8) -> Check {
    let model = tiny_model(rng, Task::Expr);
    let cfg = model.config().clone();
    let model = RefCell::new(model);
    let n = rng.random_range(2..=3);
    let c = cfg.feature_dim();
    let x = match part {
        0 => uniform(rng, &[n, 3, cfg.input_size, cfg.input_size], -1.0, 1.0),
        _ => uniform(rng, &[n, c, 4, 4], -1.0, 1.0),
    };
    case(vec![x], move |t, v| {
        let mut m = model.borrow_mut();
        let bound = m.bind(t);
        let y = match part {
            0 => m.backbone_forward(&bound, &v[0], NormMode::Train)?.1,
            1 => m.spatial_attention_unit(&bound, 0, &v[0])?,
            2 => m.channel_attention_unit(&bound, 0, &v[0])?,
            _ => m.attention_head(&bound, 1, &v[0])?.features,
        };
        project(t, y, seed)
    })
}

/// Full forward plus loss, differentiated with respect to a few randomly
/// chosen parameter tensors.
struct ModelCase {
    model: DanModel<f64>,
    images: Tensor<f64>,
    labels: Vec<usize>,
    va: Vec<[f64; 2]>,
    loss: LossConfig,
    centers: ClassCenters,
    params: Vec<usize>,
}

impl ModelCase {
    fn loss<'t>(&self, model: &mut DanModel<f64>, tape: &'t Tape<f64>) -> Result<(Var<'t, f64>, Bound<'t, f64>)> {
        let output = model.forward(tape, &self.images, NormMode::Train)?;
        let targets = match model.config().task {
            Task::Expr => Targets::Expr(&self.labels),
            Task::Va => Targets::Va(&self.va),
        };
        let total = combined_loss(&output, targets, &self.loss, &self.centers)?.total;
        Ok((total, output.params))
    }

    fn run(&self, opts: &SuiteOptions, rng: &mut ChaCha8Rng) -> Result<Probe> {
        let tape = Tape::new();
        let (loss, bound) = self.loss(&mut self.model.clone(), &tape)?;
        let base = tape.branch_signature();
        tape.backward(loss)?;
        let mut total = Probe::default();
        for &idx in &self.params {
            let id = ParamId(idx);
            let value = self.model.params().get(id).value.clone();
            let analytic = bound.get(id).grad().unwrap_or_else(|| Tensor::zeros(value.shape().to_vec()));
            let probe = compare(
                &analytic,
                &value,
                base,
                |probe| {
                    let mut m = self.model.clone();
                    m.params_mut().get_mut(id).value = probe.clone();
                    let tape = Tape::new();
                    let value = self.loss(&mut m, &tape)?.0.item();
                    Ok((value, tape.branch_signature()))
                },
                opts.step,
                rng,
            )?;
            total.merge(probe);
        }
        Ok(total)
    }
}

fn full_model_case(rng: &mut ChaCha8Rng, _seed: u64, combined: bool) -> Check {
    let task = if combined && rng.random::<bool>() { Task::Va } else { Task::Expr };
    let model = tiny_model(rng, task);
    let cfg = model.config().clone();
    let n = rng.random_range(2..=3);
    let images = uniform(rng, &[n, 3, cfg.input_size, cfg.input_size], -1.0, 1.0);
    let labels = (0..n).map(|_| rng.random_range(0..8)).collect();
    let va = (0..n).map(|_| [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)]).collect();
    let all: Vec<usize> = (0..model.params().len()).collect();
    let params = all.choose_multiple(rng, 3).copied().collect();
    let keys = if task == Task::Expr { cfg.num_classes } else { VA_BINS };
    let dim = cfg.feature_dim();
    let rows: Vec<Option<Vec<f64>>> = (0..keys)
        .map(|k| (k < 2 || rng.random::<bool>()).then(|| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect()))
        .collect();
    let loss = if combined {
        LossConfig::default()
    } else {
        LossConfig {
            lambda_affinity: 0.0,
            lambda_partition: 0.0,
            ..LossConfig::default()
        }
    };
    Check::Model(Box::new(ModelCase {
        model,
        images,
        labels,
        va,
        loss,
        centers: ClassCenters::from_rows(dim, &rows).expect("rows"),
        params,
    }))
}

fn registry() -> Vec<(&'static str, Generator)> {
    vec![
        ("conv2d", conv2d_case),
        ("dense", dense_case),
        ("batchnorm_train", |r, s| batchnorm_case(r, s, NormMode::Train)),
        ("batchnorm_eval", |r, s| batchnorm_case(r, s, NormMode::Eval)),
        ("relu", |r, s| unary_case(r, s, 0)),
        ("sigmoid", |r, s| unary_case(r, s, 1)),
        ("tanh", |r, s| unary_case(r, s, 2)),
        ("exp", |r, s| unary_case(r, s, 3)),
        ("ln", |r, s| unary_case(r, s, 4)),
        ("neg_square_scale_shift", |r, s| unary_case(r, s, 5)),
        ("softmax", |r, s| softmax_case(r, s, false)),
        ("log_softmax", |r, s| softmax_case(r, s, true)),
        ("max_pool", max_pool_case),
        ("global_avg_pool", global_avg_pool_case),
        ("broadcast_binary", binary_case),
        ("pow_scalar", pow_case),
        ("clamp_min", clamp_case),
        ("sum_mean_axis", reduce_case),
        ("stack_reshape_gather_select", shape_ops_case),
        ("attention_fusion", fusion_case),
        ("backbone", |r, s| model_case(r, s, 0)),
        ("spatial_attention", |r, s| model_case(r, s, 1)),
        ("channel_attention", |r, s| model_case(r, s, 2)),
        ("attention_head", |r, s| model_case(r, s, 3)),
        ("focal_loss", focal_case),
        ("cross_entropy", cross_entropy_case),
        ("affinity_loss", affinity_case),
        ("partition_loss", partition_case),
        ("ccc_loss", ccc_case),
        ("model_focal", |r, s| full_model_case(r, s, false)),
        ("combined_loss", |r, s| full_model_case(r, s, true)),
    ]
}

/// Names of all checks, in run order.
pub fn check_names() -> Vec<&'static str> {
    registry().into_iter().map(|(n, _)| n).collect()
}

/// Runs every check `opts.instances` times. Errors inside a check count as failures.
pub fn gradient_suite(opts: &SuiteOptions) -> SuiteReport {
    gradient_suite_with(opts, |_| {})
}

/// Like [`gradient_suite`], reporting each check as it finishes.
pub fn gradient_suite_with(opts: &SuiteOptions, mut on_check: impl FnMut(&CheckSummary)) -> SuiteReport {
    let started = Instant::now();
    let mut checks = Vec::new();
    for (k, (name, generate)) in registry().into_iter().enumerate() {
        let mut summary = CheckSummary {
            name,
            instances: 0,
            failures: 0,
            coordinates: 0,
            skipped: 0,
            max_rel_err: 0.0,
        };
        for i in 0..opts.instances {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(((k as u64) << 32) | i as u64);
            let projection_seed = rng.random();
            let c = generate(&mut rng, projection_seed);
            summary.instances += 1;
            let outcome = match &c {
                Check::Op(c) => run_case(c, opts, &mut rng),
                Check::Model(m) => m.run(opts, &mut rng),
            };
            match outcome {
                Ok(probe) => {
                    summary.max_rel_err = summary.max_rel_err.max(probe.worst);
                    summary.coordinates += probe.coordinates;
                    summary.skipped += probe.skipped;
                    if probe.worst.is_nan() || probe.worst >= opts.tolerance {
                        summary.failures += 1;
                    }
                }
                Err(_) => summary.failures += 1,
            }
        }
        on_check(&summary);
        checks.push(summary);
    }
    SuiteReport {
        checks,
        elapsed_ms: started.elapsed().as_millis() as u64,
    }
}
