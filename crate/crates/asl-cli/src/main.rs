use std::fs::{self, File};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use asl_cli::eval;
use asl_cli::images;
use asl_cli::summary;
use asl_cli::train::{run_pipeline, EpochRecord, OptimizerKind, TrainConfig};
use asl_core::augment::{augment_dataset, AugmentPlan};
use asl_core::data::{load_directory, Manifest, Origin, SplitTag};
use asl_core::error::{Error, Result};
use asl_core::gradcheck::{self, Fault, LAYER_TOL, STACK_TOL};
use asl_core::model::{Model, ModelConfig};
use asl_core::weights::peek_header;

#[derive(Parser)]
#[command(
    name = "asl",
    version,
    about = "Train, evaluate, and run a small convolutional classifier for hand-sign letters"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train on a directory of class subfolders and write run artifacts
    Train(TrainArgs),
    /// Score saved weights against a labeled directory
    Evaluate(EvalArgs),
    /// Classify a single image with saved weights
    Predict(PredictArgs),
    /// Enlarge a dataset with noise and rotation copies, written as PNGs
    Augment(AugmentArgs),
    /// Print the layer table; with 30 classes, verify the golden counts
    Summary(SummaryArgs),
    /// Check every analytic gradient against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OptChoice {
    Rmsprop,
    Adam,
}

impl From<OptChoice> for OptimizerKind {
    fn from(c: OptChoice) -> Self {
        match c {
            OptChoice::Rmsprop => OptimizerKind::RmsProp,
            OptChoice::Adam => OptimizerKind::Adam,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitChoice {
    Train,
    Val,
    Test,
}

impl From<SplitChoice> for SplitTag {
    fn from(c: SplitChoice) -> Self {
        match c {
            SplitChoice::Train => SplitTag::Train,
            SplitChoice::Val => SplitTag::Val,
            SplitChoice::Test => SplitTag::Test,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset root: one subdirectory per class
    #[arg(long)]
    data: PathBuf,
    /// Directory for model.aslw, history.csv, and the other artifacts
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long = "batch-size", default_value_t = 128)]
    batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptChoice::Rmsprop)]
    optimizer: OptChoice,
    /// Learning rate; defaults to 0.001 for rmsprop, 0.01 for adam
    #[arg(long)]
    lr: Option<f64>,
    /// Expected class count; must match the dataset when given
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Augment before training (fraction and noise options below)
    #[arg(long)]
    augment: bool,
    /// Share of samples to augment
    #[arg(long, default_value_t = 0.25)]
    fraction: f64,
    /// Gaussian noise standard deviation on the [0,1] scale
    #[arg(long = "noise-sigma", default_value_t = 0.04)]
    noise_sigma: f64,
    /// Intensity for rotated pixels that leave the frame
    #[arg(long, default_value_t = 0.0)]
    fill: f64,
    /// Split the originals first and augment only the training share
    #[arg(long = "split-first")]
    split_first: bool,
    /// Also save the model every N epochs
    #[arg(long = "checkpoint-every")]
    checkpoint_every: Option<usize>,
    /// Skip a final batch smaller than the batch size
    #[arg(long = "drop-last")]
    drop_last: bool,
    /// Record measured wall seconds in history.csv (off keeps runs
    /// byte-identical)
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset root: one subdirectory per class
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// Restrict to one split of the manifest (needs --manifest)
    #[arg(long, value_enum)]
    split: Option<SplitChoice>,
    /// manifest.csv from the training run that assigned the splits
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Also write confusion.csv and metrics.csv here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long = "top-k", default_value_t = 1)]
    top_k: usize,
    /// Class names, one per line in label order; defaults to class0..N
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    /// Dataset root: one subdirectory per class
    #[arg(long)]
    data: PathBuf,
    /// Output root for the enlarged PNG tree
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    fraction: f64,
    #[arg(long = "noise-sigma", default_value_t = 0.04)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    fill: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SummaryArgs {
    #[arg(long, default_value_t = 29)]
    classes: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt one gradient on purpose to prove the check trips
    #[arg(long = "inject-fault", hide = true)]
    inject_fault: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Predict(a) => cmd_predict(a),
        Cmd::Augment(a) => cmd_augment(a),
        Cmd::Summary(a) => cmd_summary(a),
        Cmd::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for bad configuration or parameters, 3 for data problems, 4 for a
/// failed self-check.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Param(_)
        | Error::Shape(_)
        | Error::State(_)
        | Error::Label(_)
        | Error::Config(_)
        | Error::DegenerateBatch(_) => 2,
        Error::Ingest { .. } | Error::Split(_) | Error::Format { .. } | Error::Io(_) | Error::Csv(_) => 3,
        Error::Check(_) => 4,
    }
}

fn print_epoch(r: &EpochRecord) {
    println!(
        "epoch {:>4}  train loss {:.4} acc {:.4}  val loss {:.4} acc {:.4}  {:.1}s",
        r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.wall_seconds
    );
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        optimizer: a.optimizer.into(),
        learning_rate: a.lr,
        seed: a.seed,
        num_classes: a.classes,
        augment: a.augment.then_some(AugmentPlan {
            fraction: a.fraction,
            noise_sigma: a.noise_sigma,
            fill: a.fill,
            seed: a.seed,
        }),
        split_first: a.split_first,
        drop_last: a.drop_last,
        checkpoint_every: a.checkpoint_every,
        record_timing: a.timing,
        out_dir: a.out.clone(),
    };
    println!(
        "training from {} ({}, lr {}, batch {}, {} epochs, seed {})",
        a.data.display(),
        cfg.optimizer,
        cfg.effective_lr(),
        cfg.batch_size,
        cfg.epochs,
        cfg.seed
    );
    let run = run_pipeline(&cfg, &a.data, print_epoch)?;
    println!(
        "{} split: loss {:.4}, accuracy {:.4}, macro f1 {:.4}",
        run.evaluated_split, run.eval_loss, run.eval_metrics.accuracy, run.eval_metrics.macro_f1
    );
    println!("artifacts written to {}", a.out.display());
    Ok(())
}

fn cmd_evaluate(a: EvalArgs) -> Result<()> {
    let header = peek_header(&a.weights)?;
    let model = Model::load_weights(
        &a.weights,
        ModelConfig::with_classes(header.num_classes as usize),
    )?;
    let ds = load_directory(&a.data)?;

    let subset;
    let (eval_set, what) = match (&a.manifest, a.split) {
        (None, Some(_)) => {
            return Err(Error::param(
                "--split needs --manifest to know the assignments",
            ))
        }
        (None, None) => (&ds, "all".to_string()),
        (Some(path), choice) => {
            let tag: SplitTag = choice.map_or(SplitTag::Test, Into::into);
            let manifest = Manifest::read_csv(File::open(path)?)?;
            let mut by_path = std::collections::HashMap::new();
            for (i, s) in ds.samples.iter().enumerate() {
                by_path.insert(s.source_path.as_str(), i);
            }
            let mut indices = Vec::new();
            for row in &manifest.rows {
                if row.split != tag || !matches!(row.origin, Origin::Original) {
                    continue;
                }
                match by_path.get(row.path.as_str()) {
                    Some(&i) => indices.push(i),
                    None => {
                        return Err(Error::ingest(
                            row.path.clone(),
                            "manifest row not found under --data",
                        ))
                    }
                }
            }
            subset = ds.select(&indices)?;
            (&subset, tag.to_string())
        }
    };

    let (loss, cm, metrics) = eval::evaluate(&model, eval_set)?;
    println!("split {}  samples {}", what, eval_set.len());
    println!("loss {loss}");
    println!("accuracy {}", metrics.accuracy);
    println!("macro_precision {}", metrics.macro_precision);
    println!("macro_recall {}", metrics.macro_recall);
    println!("macro_f1 {}", metrics.macro_f1);
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        cm.write_csv(File::create(out.join("confusion.csv"))?)?;
        metrics.write_csv(File::create(out.join("metrics.csv"))?)?;
        println!("wrote confusion.csv and metrics.csv to {}", out.display());
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let header = peek_header(&a.weights)?;
    let classes = header.num_classes as usize;
    let model = Model::load_weights(&a.weights, ModelConfig::with_classes(classes))?;
    let names = match &a.labels {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let names: Vec<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            if names.len() != classes {
                return Err(Error::Config(format!(
                    "{} holds {} names, the model has {classes} classes",
                    path.display(),
                    names.len()
                )));
            }
            names
        }
        None => (0..classes).map(|i| format!("class{i}")).collect(),
    };
    let img = images::load_image_for_model(&a.image, model.cfg.input_h)?;
    let ranked = eval::predict(&model, &img, a.top_k)?;
    for (class, p) in ranked {
        println!("{} {p:.6}", names[class]);
    }
    Ok(())
}

fn cmd_augment(a: AugmentArgs) -> Result<()> {
    let ds = load_directory(&a.data)?;
    let plan = AugmentPlan {
        fraction: a.fraction,
        noise_sigma: a.noise_sigma,
        fill: a.fill,
        seed: a.seed,
    };
    let grown = augment_dataset(&ds, &plan)?;
    let written = images::write_png_tree(&grown, &a.out)?;
    println!(
        "wrote {written} images ({} originals + {} augmented) to {}",
        ds.len(),
        grown.len() - ds.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_summary(a: SummaryArgs) -> Result<()> {
    let table = summary::summary_table(a.classes)?;
    print!("{}", summary::render(&table));
    if a.classes == summary::GOLDEN_CLASSES {
        summary::golden_check(&table)?;
        println!("golden check passed");
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let fault = if a.inject_fault {
        Fault::ConvBackward
    } else {
        Fault::None
    };
    let report = gradcheck::run_suite(&[a.seed], fault)?;
    for (seed, layers) in &report.layers {
        for check in layers {
            let ok = check.max_rel_err < LAYER_TOL;
            println!(
                "seed {seed}  {:<10} max rel err {:.3e}  {}",
                check.name,
                check.max_rel_err,
                if ok { "ok" } else { "FAIL" }
            );
        }
    }
    for stack in &report.stacks {
        let ok = stack.max_rel_err < STACK_TOL;
        println!(
            "seed {}  full stack ({} params sampled) max rel err {:.3e}  {}",
            stack.seed,
            stack.sampled,
            stack.max_rel_err,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if !report.pass() {
        return Err(Error::Check(
            "a gradient check exceeded its tolerance".into(),
        ));
    }
    println!("all gradient checks passed");
    Ok(())
}
