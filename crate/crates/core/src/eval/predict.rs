use std::path::Path;

use super::records::PredictionRecord;
use crate::data::{crop_and_resize, images_to_tensor, AnnotationRecord, Dataset, Image};
use crate::error::Result;
use crate::model::{DanModel, Task};
use crate::tensor::{Element, NormMode, Tape};

/// Eval-mode outputs for every item, in dataset order: 8 probabilities or a
/// (valence, arousal) pair per row. The model is not modified.
pub fn predict_dataset<T: Element>(model: &DanModel<T>, data: &Dataset, batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut model = model.clone();
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let images = data.batch::<T>(chunk, None)?;
        out.extend(predict_tensor_rows(&mut model, &images)?);
    }
    Ok(out)
}

fn predict_tensor_rows<T: Element>(model: &mut DanModel<T>, images: &crate::tensor::Tensor<T>) -> Result<Vec<Vec<f64>>> {
    let tape = Tape::new();
    let output = model.forward(&tape, images, NormMode::Eval)?;
    let values = output.prediction.output().value();
    let width = values.shape()[1];
    Ok(values.data().chunks(width).map(|row| row.iter().map(|v| v.as_f64()).collect()).collect())
}

/// Turns one output row into a record. Probabilities are renormalized in
/// 64-bit so the file satisfies the simplex invariant tightly.
pub fn to_record(id: &str, task: Task, row: &[f64]) -> PredictionRecord {
    match task {
        Task::Expr => {
            let total: f64 = row.iter().sum();
            PredictionRecord::expr(id, row.iter().map(|p| p / total).collect())
        }
        Task::Va => PredictionRecord::va(id, [row[0], row[1]]),
    }
}

/// Predicts every record in manifest order. Items whose image cannot be read
/// or cropped become error records and the rest still run.
pub fn predict_records<T: Element>(
    model: &DanModel<T>,
    records: &[AnnotationRecord],
    root: &Path,
    batch_size: usize,
) -> Vec<PredictionRecord> {
    let task = model.config().task;
    let size = model.config().input_size;
    let mut model = model.clone();
    let mut out: Vec<PredictionRecord> = Vec::with_capacity(records.len());
    let mut pending: Vec<(usize, Image)> = Vec::new();
    let mut flush = |pending: &mut Vec<(usize, Image)>, out: &mut Vec<PredictionRecord>| {
        if pending.is_empty() {
            return;
        }
        let refs: Vec<&Image> = pending.iter().map(|(_, img)| img).collect();
        let rows = images_to_tensor::<T>(&refs).and_then(|t| predict_tensor_rows(&mut model, &t));
        for (k, (slot, _)) in pending.iter().enumerate() {
            out[*slot] = match &rows {
                Ok(rows) => to_record(&records[*slot].path, task, &rows[k]),
                Err(e) => PredictionRecord::failed(&records[*slot].path, task, e.to_string()),
            };
        }
        pending.clear();
    };
    for (i, r) in records.iter().enumerate() {
        out.push(PredictionRecord::failed(&r.path, task, "pending"));
        match Image::read_ppm(&r.resolve(root)).and_then(|img| crop_and_resize(&img, r.bbox, size)) {
            Ok(img) => pending.push((i, img)),
            Err(e) => out[i] = PredictionRecord::failed(&r.path, task, e.to_string()),
        }
        if pending.len() == batch_size.max(1) {
            flush(&mut pending, &mut out);
        }
    }
    flush(&mut pending, &mut out);
    out
}
