use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::{BBox, Image};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AugmentKind {
    ColorJitter,
    RandomCrop,
    Hflip,
    JitterThenCrop,
    CropThenFlip,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 5] = [
        AugmentKind::ColorJitter,
        AugmentKind::RandomCrop,
        AugmentKind::Hflip,
        AugmentKind::JitterThenCrop,
        AugmentKind::CropThenFlip,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    pub kind: AugmentKind,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub crop_ratio: f64,
    pub flip_probability: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy::new(AugmentKind::CropThenFlip)
    }
}

impl AugmentPolicy {
    pub fn new(kind: AugmentKind) -> Self {
        AugmentPolicy {
            kind,
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
            crop_ratio: 0.9,
            flip_probability: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("brightness", self.brightness), ("contrast", self.contrast), ("saturation", self.saturation)] {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::Config(format!("{name} jitter {s} outside [0, 1)")));
            }
        }
        if !(self.crop_ratio > 0.0 && self.crop_ratio <= 1.0) {
            return Err(Error::Config(format!("crop_ratio {} outside (0, 1]", self.crop_ratio)));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config(format!("flip_probability {} outside [0, 1]", self.flip_probability)));
        }
        Ok(())
    }
}

/// Generator for one sample: stream `sample_index` of the ChaCha8 generator seeded with `seed`.
pub fn keyed_rng(seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    rng
}

/// Crop window of `ratio` times each side, at a uniformly drawn offset.
pub fn crop_window(width: usize, height: usize, ratio: f64, rng: &mut impl Rng) -> BBox {
    let w = ((width as f64 * ratio).floor() as usize).clamp(1, width);
    let h = ((height as f64 * ratio).floor() as usize).clamp(1, height);
    let x = rng.random_range(0..=width - w);
    let y = rng.random_range(0..=height - h);
    BBox { x, y, w, h }
}

fn jitter_factor(strength: f64, rng: &mut impl Rng) -> f64 {
    1.0 + strength * (2.0 * rng.random::<f64>() - 1.0)
}

fn luma(p: &[f64]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

/// Brightness, contrast, then saturation, each clamped to [0, 255].
fn color_jitter(image: &Image, policy: &AugmentPolicy, rng: &mut impl Rng) -> Image {
    let b = jitter_factor(policy.brightness, rng);
    let c = jitter_factor(policy.contrast, rng);
    let s = jitter_factor(policy.saturation, rng);
    let clamp = |v: f64| v.clamp(0.0, 255.0);
    let mut px: Vec<f64> = image.data().iter().map(|&v| clamp(v as f64 * b)).collect();
    let pixels = (px.len() / 3).max(1) as f64;
    let mean = px.chunks(3).map(luma).sum::<f64>() / pixels;
    for v in px.iter_mut() {
        *v = clamp((*v - mean) * c + mean);
    }
    for p in px.chunks_mut(3) {
        let g = luma(p);
        for v in p.iter_mut() {
            *v = clamp((*v - g) * s + g);
        }
    }
    let data = px.into_iter().map(|v| v.round() as u8).collect();
    Image::new(image.width(), image.height(), data).expect("jitter preserves extent")
}

fn random_crop(image: &Image, ratio: f64, rng: &mut impl Rng) -> Image {
    let b = crop_window(image.width(), image.height(), ratio, rng);
    image.crop(b).expect("crop window lies inside the frame")
}

fn maybe_flip(image: Image, p: f64, rng: &mut impl Rng) -> Image {
    if rng.random::<f64>() < p {
        image.flip_horizontal()
    } else {
        image
    }
}

/// Applies `policy.kind` with randomness keyed by `(seed, sample_index)`.
/// Crops change the output extent; resizing back is the caller's choice.
pub fn augment(image: &Image, policy: &AugmentPolicy, seed: u64, sample_index: u64) -> Image {
    let mut rng = keyed_rng(seed, sample_index);
    match policy.kind {
        AugmentKind::ColorJitter => color_jitter(image, policy, &mut rng),
        AugmentKind::RandomCrop => random_crop(image, policy.crop_ratio, &mut rng),
        AugmentKind::Hflip => maybe_flip(image.clone(), policy.flip_probability, &mut rng),
        AugmentKind::JitterThenCrop => {
            let j = color_jitter(image, policy, &mut rng);
            random_crop(&j, policy.crop_ratio, &mut rng)
        }
        AugmentKind::CropThenFlip => {
            let c = random_crop(image, policy.crop_ratio, &mut rng);
            maybe_flip(c, policy.flip_probability, &mut rng)
        }
    }
}
