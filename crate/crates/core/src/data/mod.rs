//! Manifests, images, augmentation, class-balanced sampling and synthetic fixtures.

mod augment;
mod dataset;
mod image;
mod manifest;
mod sampler;
mod synth;

pub use augment::{augment, crop_window, keyed_rng, AugmentKind, AugmentPolicy};
pub use dataset::{images_to_tensor, normalize_pixel, AugmentKey, Dataset};
pub use image::{crop_and_resize, BBox, Image};
pub use manifest::{
    histogram_records, load_manifest, merge_sources, parse_manifest, write_manifest, write_manifest_to,
    AnnotationRecord, MergedManifest, Source, SourceCount, EXPRESSION_NAMES, MANIFEST_HEADER, SOURCE_CLASS_COUNTS,
};
pub use sampler::{class_weights, epoch_permutation, BalancedSampler};
pub use synth::{synth_corpus, synth_generate, synth_sample, synth_va, SynthOutput, SynthSample, SynthSpec, HOLDOUT_EVERY};
