//! The training loop and the directory-to-artifacts pipeline.
//!
//! One run seed drives everything: model initialization, the stratified
//! split, augmentation choices, per-epoch shuffles, and per-batch dropout
//! masks all fork named substreams of it, so a (seed, data, config)
//! triple fixes the trained weights bitwise. Wall-clock time is measured
//! into each epoch record and shown to the caller, but the history CSV
//! writes zeros in the seconds column unless timing is explicitly
//! requested, keeping the default artifacts reproducible byte for byte.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use asl_core::augment::{augment_dataset, AugmentPlan};
use asl_core::data::{
    load_directory, split, Dataset, Manifest, ManifestRow, SplitRatios, SplitTag,
};
use asl_core::error::{Error, Result};
use asl_core::loss::crossentropy_from_logits;
use asl_core::metrics::Metrics;
use asl_core::model::{Model, ModelConfig};
use asl_core::optim::{AdamHyper, Optimizer, RmsPropHyper};
use asl_core::rng::Rng;
use asl_core::tensor::Tensor;

use crate::eval::{argmax, evaluate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    RmsProp,
    Adam,
}

impl OptimizerKind {
    pub fn default_lr(self) -> f64 {
        match self {
            OptimizerKind::RmsProp => 0.001,
            OptimizerKind::Adam => 0.01,
        }
    }

    fn build(self, lr: f64) -> Optimizer<f32> {
        match self {
            OptimizerKind::RmsProp => Optimizer::rmsprop(RmsPropHyper {
                lr,
                ..RmsPropHyper::default()
            }),
            OptimizerKind::Adam => Optimizer::adam(AdamHyper {
                lr,
                ..AdamHyper::default()
            }),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// Everything a run needs beyond the data itself.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// None picks the optimizer's default rate.
    pub learning_rate: Option<f64>,
    pub seed: u64,
    /// None adopts the training set's class count; a value must match it.
    pub num_classes: Option<usize>,
    /// Enlarges the data before training; applied by `run_pipeline`.
    pub augment: Option<AugmentPlan>,
    /// Split the originals first and augment only the training share,
    /// instead of augmenting everything and then splitting.
    pub split_first: bool,
    /// Skip a final batch smaller than `batch_size`.
    pub drop_last: bool,
    pub checkpoint_every: Option<usize>,
    /// Write measured wall seconds into history.csv instead of zeros.
    pub record_timing: bool,
    pub out_dir: PathBuf,
}

impl TrainConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            optimizer: OptimizerKind::RmsProp,
            learning_rate: None,
            seed: 0,
            num_classes: None,
            augment: None,
            split_first: false,
            drop_last: false,
            checkpoint_every: None,
            record_timing: false,
            out_dir: out_dir.into(),
        }
    }

    pub fn effective_lr(&self) -> f64 {
        self.learning_rate.unwrap_or(self.optimizer.default_lr())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!("learning rate {lr} must be positive")));
            }
        }
        if self.num_classes.is_some_and(|c| c < 2) {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// NaN when the run has no validation set
    pub val_loss: f64,
    pub val_acc: f64,
    pub wall_seconds: f64,
}

fn count_correct(logits: &Tensor<f32>, labels: &[usize]) -> usize {
    let c = logits.shape()[1];
    logits
        .data()
        .chunks_exact(c)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count()
}

pub fn train(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
) -> Result<(Model<f32>, Vec<EpochRecord>)> {
    train_with_progress(cfg, train_set, val_set, |_| {})
}

/// Train, invoking `on_epoch` after each epoch record is complete, then
/// write `model.aslw` and `history.csv` to the configured directory.
pub fn train_with_progress(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model<f32>, Vec<EpochRecord>)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let classes = match cfg.num_classes {
        Some(c) if c != train_set.num_classes() => {
            return Err(Error::Config(format!(
                "config says {c} classes but the training set has {}",
                train_set.num_classes()
            )))
        }
        Some(c) => c,
        None => train_set.num_classes(),
    };
    let val_set = val_set.filter(|v| !v.is_empty());
    if let Some(v) = val_set {
        if v.num_classes() != classes {
            return Err(Error::Config(format!(
                "validation set has {} classes, training set has {classes}",
                v.num_classes()
            )));
        }
    }
    let n = train_set.len();
    if cfg.batch_size > n {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {n}-sample training set",
            cfg.batch_size
        )));
    }
    // batch normalization standardizes over the batch, so every trained
    // batch must hold at least 2 samples
    if cfg.batch_size < 2 {
        return Err(Error::Config(
            "batch size 1 leaves batch normalization without statistics".into(),
        ));
    }
    if !cfg.drop_last && n % cfg.batch_size == 1 {
        return Err(Error::Config(format!(
            "the final batch of {n} % {} would hold a single sample, which batch \
             normalization cannot standardize; change the batch size or drop the last batch",
            cfg.batch_size
        )));
    }

    let origin = Rng::new(cfg.seed);
    let mut model = Model::build(ModelConfig::with_classes(classes), &origin)?;
    let mut opt = cfg.optimizer.build(cfg.effective_lr());
    fs::create_dir_all(&cfg.out_dir)?;

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        origin.fork(&format!("shuffle/epoch-{epoch}")).shuffle(&mut order);

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            if cfg.drop_last && batch.len() < cfg.batch_size {
                break;
            }
            let (x, labels) = train_set.stack(batch)?;
            let mut mask_rng = origin.fork(&format!("dropout/e{epoch}/b{b}"));
            let (logits, cache) = model.forward_train(&x, &mut mask_rng)?;
            let (loss, grad_logits) = crossentropy_from_logits(&logits, &labels)?;
            let grads = model.backward(&cache, &grad_logits)?;
            opt.step(&mut model.trainable_params_mut(), &grads.tensors)?;
            loss_sum += loss * batch.len() as f64;
            correct += count_correct(&logits, &labels);
            seen += batch.len();
        }

        let (val_loss, val_acc) = match val_set {
            Some(v) => {
                let (loss, cm, _) = evaluate(&model, v)?;
                (loss, cm.accuracy()?)
            }
            None => (f64::NAN, f64::NAN),
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_loss,
            val_acc,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.push(record);

        if let Some(every) = cfg.checkpoint_every {
            if epoch % every == 0 {
                model.save_weights(&cfg.out_dir.join(format!("checkpoint-{epoch}.aslw")))?;
            }
        }
    }

    model.save_weights(&cfg.out_dir.join("model.aslw"))?;
    write_history(&cfg.out_dir.join("history.csv"), &history, cfg.record_timing)?;
    Ok((model, history))
}

/// One row per epoch under the fixed header. Floats print in Rust's
/// shortest round-trip form; `timing: false` zeroes the seconds column so
/// equal runs produce equal files.
pub fn write_history(path: &Path, records: &[EpochRecord], timing: bool) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "epoch,train_loss,train_acc,val_loss,val_acc,seconds")?;
    for r in records {
        let seconds = if timing {
            format!("{:.3}", r.wall_seconds)
        } else {
            "0.000".to_string()
        };
        writeln!(
            out,
            "{},{},{},{},{},{seconds}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        )?;
    }
    out.flush()?;
    Ok(())
}

/// The finished artifacts of a full pipeline run.
pub struct PipelineRun {
    pub model: Model<f32>,
    pub history: Vec<EpochRecord>,
    pub manifest: Manifest,
    /// which split the confusion matrix and metrics were computed on
    pub evaluated_split: SplitTag,
    pub eval_loss: f64,
    pub eval_metrics: Metrics,
}

/// Load a class-per-directory tree, optionally augment, split 60/20/20,
/// train, and write every artifact (`model.aslw`, `history.csv`,
/// `manifest.csv`, `confusion.csv`, `metrics.csv`) to the output
/// directory. The confusion matrix and metrics come from the test split,
/// falling back to val then train if a split came up empty.
pub fn run_pipeline(
    cfg: &TrainConfig,
    data_dir: &Path,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<PipelineRun> {
    cfg.validate()?;
    let loaded = load_directory(data_dir)?;
    if let Some(want) = cfg.num_classes {
        if want != loaded.num_classes() {
            return Err(Error::Config(format!(
                "config says {want} classes but {} holds {}",
                data_dir.display(),
                loaded.num_classes()
            )));
        }
    }

    let ratios = SplitRatios::default();
    let split_rng = Rng::new(cfg.seed);
    let (full, manifest) = match (&cfg.augment, cfg.split_first) {
        (None, _) => {
            let manifest = split(&loaded, ratios, &split_rng)?;
            (loaded, manifest)
        }
        (Some(plan), false) => {
            let grown = augment_dataset(&loaded, plan)?;
            let manifest = split(&grown, ratios, &split_rng)?;
            (grown, manifest)
        }
        (Some(plan), true) => {
            let mut manifest = split(&loaded, ratios, &split_rng)?;
            let originals = loaded.select(&manifest.indices(SplitTag::Train))?;
            let grown = augment_dataset(&originals, plan)?;
            // append only the augmented tail; the originals stay where
            // the split put them
            let mut samples = loaded.samples;
            for s in &grown.samples[originals.len()..] {
                manifest.rows.push(ManifestRow {
                    path: s.source_path.clone(),
                    label_name: grown.class_names[s.label_id].clone(),
                    label_id: s.label_id,
                    split: SplitTag::Train,
                    origin: s.origin,
                });
                samples.push(s.clone());
            }
            (Dataset::new(samples, grown.class_names.clone())?, manifest)
        }
    };

    let train_set = full.select(&manifest.indices(SplitTag::Train))?;
    let val_set = full.select(&manifest.indices(SplitTag::Val))?;
    let test_set = full.select(&manifest.indices(SplitTag::Test))?;
    let val_opt = (!val_set.is_empty()).then_some(&val_set);

    let (model, history) = train_with_progress(cfg, &train_set, val_opt, on_epoch)?;
    manifest.write_csv(File::create(cfg.out_dir.join("manifest.csv"))?)?;

    let (eval_set, evaluated_split) = if !test_set.is_empty() {
        (&test_set, SplitTag::Test)
    } else if !val_set.is_empty() {
        (&val_set, SplitTag::Val)
    } else {
        (&train_set, SplitTag::Train)
    };
    let (eval_loss, cm, eval_metrics) = evaluate(&model, eval_set)?;
    cm.write_csv(File::create(cfg.out_dir.join("confusion.csv"))?)?;
    eval_metrics.write_csv(File::create(cfg.out_dir.join("metrics.csv"))?)?;

    Ok(PipelineRun {
        model,
        history,
        manifest,
        evaluated_split,
        eval_loss,
        eval_metrics,
    })
}
