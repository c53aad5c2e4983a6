use std::path::Path;

use super::augment::{augment, AugmentPolicy};
use super::image::{crop_and_resize, Image};
use super::manifest::AnnotationRecord;
use super::synth::SynthSample;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Maps a byte to [-1, 1].
pub fn normalize_pixel(v: u8) -> f64 {
    v as f64 / 127.5 - 1.0
}

/// Stacks equally sized images into `[N, 3, H, W]`.
pub fn images_to_tensor<T: Element>(images: &[&Image]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::BatchSize("empty image batch".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * 3 * w * h);
    for img in images {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::dim(
                "image",
                format!("{}x{} image in a {w}x{h} batch", img.width(), img.height()),
            ));
        }
        for c in 0..3 {
            data.extend(img.data()[c..].iter().step_by(3).map(|&v| T::from_f64_lossy(normalize_pixel(v))));
        }
    }
    Tensor::new(vec![images.len(), 3, h, w], data)
}

/// Augmentation for one batch: item `k` uses key `(seed, first_index + k)`.
#[derive(Clone, Copy, Debug)]
pub struct AugmentKey<'a> {
    pub policy: &'a AugmentPolicy,
    pub seed: u64,
    pub first_index: u64,
}

/// Records with their images, cropped and resized to the model input.
#[derive(Clone, Debug)]
pub struct Dataset {
    records: Vec<AnnotationRecord>,
    images: Vec<Image>,
    input_size: usize,
}

impl Dataset {
    pub fn from_images(records: Vec<AnnotationRecord>, images: Vec<Image>, input_size: usize) -> Result<Self> {
        if records.len() != images.len() {
            return Err(Error::dim("records", format!("{} records, {} images", records.len(), images.len())));
        }
        let images = records
            .iter()
            .zip(images)
            .map(|(r, img)| crop_and_resize(&img, r.bbox, input_size))
            .collect::<Result<_>>()?;
        Ok(Dataset {
            records,
            images,
            input_size,
        })
    }

    /// Reads every record's PPM relative to `root`.
    pub fn load(records: Vec<AnnotationRecord>, root: &Path, input_size: usize) -> Result<Self> {
        let images = records
            .iter()
            .map(|r| Image::read_ppm(&r.resolve(root)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_images(records, images, input_size)
    }

    pub fn from_synth<'a>(samples: impl IntoIterator<Item = &'a SynthSample>, input_size: usize) -> Result<Self> {
        let (records, images) = samples.into_iter().map(|s| (s.record.clone(), s.image.clone())).unzip();
        Self::from_images(records, images, input_size)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    /// Subset in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            input_size: self.input_size,
        }
    }

    /// Input tensor for `indices`, optionally augmented then resized back to the input size.
    pub fn batch<T: Element>(&self, indices: &[usize], augmentation: Option<AugmentKey<'_>>) -> Result<Tensor<T>> {
        let owned: Vec<Image>;
        let refs: Vec<&Image> = match augmentation {
            None => indices.iter().map(|&i| &self.images[i]).collect(),
            Some(key) => {
                owned = indices
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        augment(&self.images[i], key.policy, key.seed, key.first_index + k as u64)
                            .resize(self.input_size, self.input_size)
                    })
                    .collect();
                owned.iter().collect()
            }
        };
        images_to_tensor(&refs)
    }

    pub fn expr_labels(&self, indices: &[usize]) -> Result<Vec<usize>> {
        indices
            .iter()
            .map(|&i| {
                self.records[i]
                    .expr
                    .ok_or_else(|| Error::Config(format!("record {} has no expr label", self.records[i].path)))
            })
            .collect()
    }

    pub fn va_targets(&self, indices: &[usize]) -> Result<Vec<[f64; 2]>> {
        indices
            .iter()
            .map(|&i| {
                self.records[i]
                    .va
                    .ok_or_else(|| Error::Config(format!("record {} has no valence/arousal", self.records[i].path)))
            })
            .collect()
    }

    /// Offline alternative to per-step augmentation: appends `copies` augmented
    /// variants of every record, keyed `(seed, copy * len + i)`.
    pub fn materialize(&self, policy: &AugmentPolicy, seed: u64, copies: usize) -> Dataset {
        let mut out = self.clone();
        let n = self.len() as u64;
        for copy in 0..copies as u64 {
            for (i, (r, img)) in self.records.iter().zip(&self.images).enumerate() {
                out.records.push(r.clone());
                out.images.push(augment(img, policy, seed, copy * n + i as u64).resize(self.input_size, self.input_size));
            }
        }
        out
    }
}
