use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::augment::keyed_rng;
use super::image::Image;
use super::manifest::{write_manifest, AnnotationRecord, Source};
use crate::error::{Error, Result};
use crate::model::NUM_EXPRESSIONS;

/// Every `HOLDOUT_EVERY`-th sample of each class goes to the validation split.
pub const HOLDOUT_EVERY: usize = 5;

/// Blob layout per class: (x offset from center line, y, radius), as fractions of the side.
/// Each blob is mirrored about the vertical axis so horizontal flips keep the class.
const LAYOUTS: [(f64, f64, f64); NUM_EXPRESSIONS] = [
    (0.25, 0.30, 0.12),
    (0.25, 0.70, 0.12),
    (0.50, 0.50, 0.20),
    (0.12, 0.50, 0.10),
    (0.35, 0.22, 0.10),
    (0.35, 0.78, 0.10),
    (0.50, 0.20, 0.15),
    (0.50, 0.80, 0.15),
];

const TINTS: [[f64; 3]; 4] = [[1.0, 0.65, 0.65], [0.65, 1.0, 0.65], [0.65, 0.65, 1.0], [1.0, 1.0, 0.6]];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.num_classes > NUM_EXPRESSIONS {
            return Err(Error::Config(format!("num_classes {} outside 1..={NUM_EXPRESSIONS}", self.num_classes)));
        }
        if self.image_size < 8 {
            return Err(Error::Config(format!("image_size {} below 8", self.image_size)));
        }
        Ok(())
    }
}

/// A generated sample before it is written anywhere.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub record: AnnotationRecord,
    pub image: Image,
    pub holdout: bool,
}

/// Valence/arousal for class `c`: a point on a circle of radius 0.75 at angle
/// `2 pi c / 8`, displaced by 0.15 along the pattern phase.
pub fn synth_va(class: usize, phase: f64) -> [f64; 2] {
    let theta = TAU * class as f64 / NUM_EXPRESSIONS as f64;
    [0.75 * theta.cos() + 0.15 * phase.sin(), 0.75 * theta.sin() + 0.15 * phase.cos()]
}

/// Renders sample `index` of `class`; a pure function of the spec seed and both indices.
pub fn synth_sample(spec: &SynthSpec, class: usize, index: usize) -> SynthSample {
    let s = spec.image_size as f64;
    let mut rng = keyed_rng(spec.seed, ((class as u64) << 32) | index as u64);
    let phase = rng.random_range(0.0..TAU);
    let jitter = 0.04 * s;
    let (fx, fy, fr) = LAYOUTS[class];
    let dx = (0.5 - fx) * s + rng.random_range(-jitter..=jitter);
    let cy = fy * s + rng.random_range(-jitter..=jitter);
    let radius = fr * s * rng.random_range(0.85..1.15);
    let gain = rng.random_range(0.85..1.15);
    let cycles = if (class / 2).is_multiple_of(2) { 3.0 } else { 5.0 };
    let vertical = class % 2 == 1;
    let tint = TINTS[class % TINTS.len()];
    let noise = Normal::new(0.0, 12.0).expect("valid deviation");

    let mut data = Vec::with_capacity(3 * spec.image_size * spec.image_size);
    for y in 0..spec.image_size {
        for x in 0..spec.image_size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if vertical { px } else { py } / s;
            let grating = 70.0 + 35.0 * (TAU * cycles * t + phase).sin();
            let blob: f64 = [s / 2.0 - dx, s / 2.0 + dx]
                .iter()
                .map(|&cx| (-((px - cx).powi(2) + (py - cy).powi(2)) / (2.0 * radius * radius)).exp())
                .sum::<f64>()
                .min(1.0);
            let base = (grating + 150.0 * blob) * gain;
            for t in tint {
                let v = base * t + noise.sample(&mut rng);
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    let image = Image::new(spec.image_size, spec.image_size, data).expect("extent matches");
    SynthSample {
        record: AnnotationRecord {
            path: format!("{}/c{class}_{index:05}.ppm", Source::Synth),
            source: Source::Synth,
            expr: Some(class),
            va: Some(synth_va(class, phase)),
            bbox: None,
        },
        image,
        holdout: index % HOLDOUT_EVERY == HOLDOUT_EVERY - 1,
    }
}

/// Whole corpus in class-major order.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Vec<SynthSample>> {
    spec.validate()?;
    Ok((0..spec.num_classes)
        .flat_map(|c| (0..spec.per_class).map(move |i| (c, i)))
        .map(|(c, i)| synth_sample(spec, c, i))
        .collect())
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub train: PathBuf,
    pub val: PathBuf,
    pub images: usize,
}

/// Writes `<out>/SYNTH/*.ppm` plus `manifest.csv` (all rows), `train.csv` and `val.csv`.
pub fn synth_generate(spec: &SynthSpec, out_dir: &Path) -> Result<SynthOutput> {
    let corpus = synth_corpus(spec)?;
    let image_dir = out_dir.join(Source::Synth.as_str());
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    for s in &corpus {
        s.image.write_ppm(&s.record.resolve(out_dir))?;
    }
    let (val, train): (Vec<_>, Vec<_>) = corpus.iter().partition(|s| s.holdout);
    let rows = |v: &[&SynthSample]| v.iter().map(|s| s.record.clone()).collect::<Vec<_>>();
    let all: Vec<&SynthSample> = corpus.iter().collect();
    let out = SynthOutput {
        manifest: out_dir.join("manifest.csv"),
        train: out_dir.join("train.csv"),
        val: out_dir.join("val.csv"),
        images: corpus.len(),
    };
    write_manifest(&out.manifest, &rows(&all))?;
    write_manifest(&out.train, &rows(&train))?;
    write_manifest(&out.val, &rows(&val))?;
    Ok(out)
}
