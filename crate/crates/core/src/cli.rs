//! The `klvq` command-line tool.
//!
//! Every subcommand writes its results to `out`; diagnostics go to `err`.
//! Reals on standard output are printed with 17 significant digits.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bof::{evaluate, generate_synthetic, HistogramDistance, SynthConfig};
use crate::divergence::SmoothingConfig;
use crate::error::{Error, Result};
use crate::io::{
    load_bags, load_dataset, load_model, load_vectors, save_bags, save_dataset, save_model,
    StoredKmeans, StoredModel, FORMAT_VERSION,
};
use crate::kmeans::{kmeans_fit, KmeansConfig};
use crate::label_model::{KnnConfig, DEFAULT_K};
use crate::quantizer::{fit, InitMode, QuantizerConfig, UpdateMode};

#[derive(Debug, Parser)]
#[command(
    name = "klvq",
    version,
    about = "Supervised vector quantization by KL-divergence minimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a KL quantizer on a labelled CSV.
    Fit(FitArgs),
    /// Quantize the rows of a CSV with a saved model.
    Quantize(QuantizeArgs),
    /// Evaluate a model on bag-of-features train/test directories.
    EvalBof(EvalArgs),
    /// Write a synthetic bag-of-features benchmark.
    Synth(SynthArgs),
    /// Train the k-means baseline on a labelled CSV.
    KmeansFit(KmeansArgs),
    /// Print model metadata.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    Random,
    Kmeans,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Paper,
    Centroid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DistanceArg {
    L1,
    L2,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Number of quantization subsets M.
    #[arg(long)]
    subsets: usize,
    /// Neighbors per label estimate; defaults to 10 clipped to the data size.
    #[arg(long)]
    knn: Option<usize>,
    /// Do not count a training vector among its own neighbors.
    #[arg(long)]
    exclude_self: bool,
    #[arg(long, default_value_t = crate::divergence::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, value_enum, default_value = "random")]
    init: InitArg,
    #[arg(long, value_enum, default_value = "paper")]
    mode: ModeArg,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct KmeansArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct QuantizeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 40)]
    items_per_class: usize,
    /// Descriptors per item.
    #[arg(long, default_value_t = 50)]
    descriptors: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Standard deviation of each mode.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 6.0)]
    mode_distance: f64,
    /// Probability that a descriptor is drawn from the shared background mode.
    #[arg(long, default_value_t = crate::bof::DEFAULT_BACKGROUND_FRACTION)]
    background: f64,
    /// Spread of the background mode relative to --noise.
    #[arg(long, default_value_t = crate::bof::DEFAULT_BACKGROUND_SCALE)]
    background_scale: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    train_dir: PathBuf,
    #[arg(long)]
    test_dir: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "l1")]
    distance: DistanceArg,
}

#[derive(Debug, Args)]
struct InfoArgs {
    #[arg(long)]
    model: PathBuf,
}

/// Runs the tool on `args` (program name first) and returns the exit code:
/// 0 on success, 1 for runtime errors, 2 for usage errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Fit(args) => run_fit(args, out),
        Command::KmeansFit(args) => run_kmeans(args, out),
        Command::Quantize(args) => run_quantize(args, out),
        Command::Synth(args) => run_synth(args, out),
        Command::EvalBof(args) => run_eval(args, out),
        Command::Info(args) => run_info(args, out),
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

macro_rules! emit {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(stdout_err)?
    };
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn run_fit(args: FitArgs, out: &mut dyn Write) -> Result<()> {
    let dataset = load_dataset(&args.input)?;
    let include_self = !args.exclude_self;
    let knn = match args.knn {
        Some(k) => KnnConfig::new(k, include_self),
        None => KnnConfig::clipped(DEFAULT_K, include_self, dataset.len()),
    };
    let config = QuantizerConfig {
        subsets: args.subsets,
        knn,
        smoothing: SmoothingConfig::new(args.epsilon)?,
        max_iters: args.max_iters,
        seed: args.seed,
        init: match args.init {
            InitArg::Random => InitMode::Random,
            InitArg::Kmeans => InitMode::Kmeans,
        },
        update_mode: match args.mode {
            ModeArg::Paper => UpdateMode::Paper,
            ModeArg::Centroid => UpdateMode::Centroid,
        },
    };
    let result = fit(&dataset, &config)?;
    let model = result.model;
    emit!(out, "iterations_run,{}", model.iterations_run);
    emit!(out, "converged,{}", model.converged);
    emit!(out, "final_objective,{}", real(model.final_objective));
    emit!(out, "iteration,objective");
    for (i, v) in result.objective_trace.iter().enumerate() {
        emit!(out, "{},{}", i + 1, real(*v));
    }
    save_model(&StoredModel::Klvq(model), &args.output)
}

fn run_kmeans(args: KmeansArgs, out: &mut dyn Write) -> Result<()> {
    let dataset = load_dataset(&args.input)?;
    let config = KmeansConfig {
        clusters: args.clusters,
        seed: args.seed,
        max_iters: args.max_iters,
    };
    let result = kmeans_fit(dataset.features(), &config)?;
    emit!(out, "iterations_run,{}", result.model.iterations_run);
    emit!(out, "converged,{}", result.model.converged);
    emit!(out, "inertia,{}", real(result.model.inertia));
    emit!(out, "iteration,inertia");
    for (i, v) in result.inertia_trace.iter().enumerate() {
        emit!(out, "{},{}", i + 1, real(*v));
    }
    let stored = StoredKmeans {
        model: result.model,
        config,
        class_names: dataset.class_names().to_vec(),
    };
    save_model(&StoredModel::Kmeans(stored), &args.output)
}

fn run_quantize(args: QuantizeArgs, out: &mut dyn Write) -> Result<()> {
    let model: StoredModel<f64> = load_model(&args.model)?;
    let vectors = load_vectors(&args.input)?;
    if vectors.features.cols() != model.dim() {
        return Err(Error::Parameter(format!(
            "input has dimension {}, model expects {}",
            vectors.features.cols(),
            model.dim()
        )));
    }
    for row in vectors.features.iter_rows() {
        emit!(out, "{}", model.quantize(row)?);
    }
    Ok(())
}

fn run_synth(args: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let config = SynthConfig {
        seed: args.seed,
        classes: args.classes,
        items_per_class: args.items_per_class,
        descriptors_per_item: args.descriptors,
        dim: args.dim,
        noise: args.noise,
        mode_distance: args.mode_distance,
        background_fraction: args.background,
        background_scale: args.background_scale,
    };
    let bench = generate_synthetic(&config)?;
    let train_dir = args.out_dir.join("train");
    let test_dir = args.out_dir.join("test");
    save_bags(&bench.train, &bench.class_names, &train_dir)?;
    save_bags(&bench.test, &bench.class_names, &test_dir)?;
    let descriptors = args.out_dir.join("train_descriptors.csv");
    save_dataset(&bench.descriptors, &descriptors)?;
    emit!(out, "train_items,{}", bench.train.len());
    emit!(out, "test_items,{}", bench.test.len());
    emit!(out, "train_descriptors,{}", bench.descriptors.len());
    emit!(out, "train_dir,{}", display(&train_dir));
    emit!(out, "test_dir,{}", display(&test_dir));
    emit!(out, "descriptor_csv,{}", display(&descriptors));
    Ok(())
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn run_eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model: StoredModel<f64> = load_model(&args.model)?;
    let mut class_names = Vec::new();
    let train = load_bags(&args.train_dir, &mut class_names)?;
    let test = load_bags(&args.test_dir, &mut class_names)?;
    for bag in train.iter().chain(&test) {
        if bag.descriptors.cols() != model.dim() {
            return Err(Error::Parameter(format!(
                "item {:?} has dimension {}, model expects {}",
                bag.item_id,
                bag.descriptors.cols(),
                model.dim()
            )));
        }
    }
    let distance = match args.distance {
        DistanceArg::L1 => HistogramDistance::L1,
        DistanceArg::L2 => HistogramDistance::L2,
    };
    let report = evaluate(
        &train,
        &test,
        model.kind(),
        |x: &[f64]| model.quantize(x),
        model.cells(),
        distance,
        class_names.len(),
    )?;
    write!(out, "{}", report.table(&class_names)).map_err(stdout_err)?;
    emit!(out, "");
    write!(out, "{}", report.confusion_csv(&class_names)).map_err(stdout_err)?;
    Ok(())
}

fn run_info(args: InfoArgs, out: &mut dyn Write) -> Result<()> {
    let model: StoredModel<f64> = load_model(&args.model)?;
    emit!(out, "format_version,{FORMAT_VERSION}");
    emit!(out, "kind,{}", model.kind());
    emit!(out, "dimension,{}", model.dim());
    emit!(out, "classes,{}", model.class_names().join(" "));
    match &model {
        StoredModel::Klvq(m) => {
            emit!(out, "subsets,{}", m.subsets());
            emit!(out, "training_vectors,{}", m.training.len());
            emit!(out, "knn_k,{}", m.config.knn.k);
            emit!(out, "include_self,{}", m.config.knn.include_self);
            emit!(out, "epsilon,{}", real(m.config.smoothing.epsilon));
            emit!(out, "seed,{}", m.config.seed);
            emit!(out, "max_iters,{}", m.config.max_iters);
            emit!(out, "init,{:?}", m.config.init);
            emit!(out, "update_mode,{:?}", m.config.update_mode);
            emit!(out, "iterations_run,{}", m.iterations_run);
            emit!(out, "converged,{}", m.converged);
            emit!(out, "final_objective,{}", real(m.final_objective));
        }
        StoredModel::Kmeans(k) => {
            emit!(out, "clusters,{}", k.model.clusters());
            emit!(out, "seed,{}", k.config.seed);
            emit!(out, "max_iters,{}", k.config.max_iters);
            emit!(out, "iterations_run,{}", k.model.iterations_run);
            emit!(out, "converged,{}", k.model.converged);
            emit!(out, "inertia,{}", real(k.model.inertia));
        }
    }
    Ok(())
}
