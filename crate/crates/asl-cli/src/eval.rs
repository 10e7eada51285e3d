//! Evaluation over a dataset and single-image prediction.

use asl_core::data::Dataset;
use asl_core::error::{Error, Result};
use asl_core::loss::crossentropy_from_logits;
use asl_core::metrics::{ConfusionMatrix, Metrics};
use asl_core::model::Model;
use asl_core::tensor::Tensor;

/// Samples per forward pass. Inference outputs are per-sample
/// independent, so the chunking never changes a result.
const EVAL_BATCH: usize = 128;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Inference pass in dataset order: mean loss, confusion matrix, and the
/// derived metric set.
pub fn evaluate(model: &Model<f32>, ds: &Dataset) -> Result<(f64, ConfusionMatrix, Metrics)> {
    if ds.is_empty() {
        return Err(Error::param("cannot evaluate an empty dataset"));
    }
    if ds.num_classes() != model.cfg.num_classes {
        return Err(Error::Config(format!(
            "model has {} classes but the dataset has {}",
            model.cfg.num_classes,
            ds.num_classes()
        )));
    }
    let c = ds.num_classes();
    let mut cm = ConfusionMatrix::new(ds.class_names.clone())?;
    let mut loss_sum = 0.0f64;
    let all: Vec<usize> = (0..ds.len()).collect();
    for batch in all.chunks(EVAL_BATCH) {
        let (x, labels) = ds.stack(batch)?;
        let logits = model.forward_eval(&x)?;
        let (loss, _) = crossentropy_from_logits(&logits, &labels)?;
        loss_sum += loss * batch.len() as f64;
        for (row, &y) in logits.data().chunks_exact(c).zip(&labels) {
            cm.update(y, argmax(row))?;
        }
    }
    let metrics = cm.metrics()?;
    Ok((loss_sum / ds.len() as f64, cm, metrics))
}

/// Class probabilities for one `[H, W, C]` image, as (class index,
/// probability) ranked descending with ties broken by the lower index.
pub fn predict(model: &Model<f32>, image: &Tensor<f32>, top_k: usize) -> Result<Vec<(usize, f64)>> {
    let c = model.cfg.num_classes;
    if top_k == 0 || top_k > c {
        return Err(Error::param(format!(
            "top_k must be between 1 and {c}, got {top_k}"
        )));
    }
    let want = [model.cfg.input_h, model.cfg.input_w, model.cfg.input_c];
    if *image.shape() != want {
        return Err(Error::shape(format!(
            "predict expects a {:?} image, got {:?}",
            want,
            image.shape()
        )));
    }
    let batch = image.reshape(&[1, want[0], want[1], want[2]])?;
    let probs = model.probs_eval(&batch)?;
    let mut ranked: Vec<(usize, f64)> = probs
        .data()
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, p as f64))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    Ok(ranked)
}
