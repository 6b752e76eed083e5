//! `deepmlp`: train, evaluate, preview deformations, check gradients and
//! benchmark kernels.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 verification failure,
//! 3 I/O error (including an interrupted training run).

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use deepmlp::bench::{bench_deformation, KernelBench, Op};
use deepmlp::deform::{deform_image, upscale_28_to_29, NORM_SIDE};
use deepmlp::eval_report::{evaluate, render_misclassified};
use deepmlp::kernels::{gradient_check, GRAD_CHECK_STEP};
use deepmlp::mnist_io::{load_dataset, IdxError, Split};
use deepmlp::network::{Checkpoint, CheckpointError, Mlp};
use deepmlp::rng::{uniform, Purpose, Streams};
use deepmlp::trainer::{train, TrainError, TrainOptions};
use deepmlp::{pgm, Architecture, Dataset, Engine, TileScheme};

use config::{DataConfig, RunConfig, Verbosity};

#[derive(Debug)]
enum CliError {
    Config(String),
    Verification(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Verification(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Verification(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<IdxError> for CliError {
    fn from(e: IdxError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) | TrainError::Deform(_) | TrainError::Network(_) => {
                CliError::Config(e.to_string())
            }
            TrainError::Io { .. } | TrainError::Checkpoint(_) | TrainError::Interrupted { .. } => {
                CliError::Io(e.to_string())
            }
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "deepmlp", version, about = "Plain deep MLPs trained on deformed MNIST digits")]
struct Cli {
    /// Worker lanes for parallel kernels (default: all logical CPUs).
    #[arg(long, global = true)]
    lanes: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and keep the best-validation checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test set.
    Evaluate(EvaluateArgs),
    /// Write deformed training digits as PGM images.
    DeformPreview(PreviewArgs),
    /// Compare back-propagated gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Measure kernel or deformation throughput.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Directory with the canonical MNIST files [env: DMLP_DATA_DIR].
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
}

impl DataArgs {
    fn as_config(&self) -> DataConfig {
        DataConfig {
            dir: self.data_dir.clone(),
            train_images: self.train_images.clone(),
            train_labels: self.train_labels.clone(),
            test_images: self.test_images.clone(),
            test_labels: self.test_labels.clone(),
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// TOML run config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Layer sizes, e.g. 841,500,10.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    eta0: Option<f64>,
    #[arg(long)]
    eta_min: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    max_epochs: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on plain upscaled images.
    #[arg(long)]
    no_deform: bool,
    /// Keep dataset order instead of shuffling every epoch.
    #[arg(long)]
    no_shuffle: bool,
    /// Use only the first N training images.
    #[arg(long)]
    limit: Option<usize>,
    /// Output directory for checkpoints, history and summary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Record sample checksums in the history.
    #[arg(long)]
    instrument: bool,
    #[arg(long, value_enum)]
    verbosity: Option<Verbosity>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Writes misclassified digits, manifest.tsv and report.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PreviewArgs {
    #[command(flatten)]
    data: DataArgs,
    /// TOML run config supplying `[deform]` parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the undeformed upscaled digit next to each sample.
    #[arg(long)]
    with_original: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value = "29,20,10")]
    arch: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    target: usize,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value = "841,1000,500,10")]
    arch: String,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value = "train_step")]
    op: Op,
    /// Images per deformation pass (op deform).
    #[arg(long, default_value_t = 6000)]
    images: usize,
    /// Tile scheme overrides.
    #[arg(long)]
    segment: Option<usize>,
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long)]
    staged_stride: Option<usize>,
    #[arg(long)]
    update_width: Option<usize>,
    /// Append records to this file instead of printing them.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_arch(s: &str) -> Result<Architecture, CliError> {
    Architecture::parse(s).map_err(|e| CliError::Config(format!("--arch {s:?}: {e}")))
}

fn load_split(data: &DataConfig, split: Split) -> Result<Dataset, CliError> {
    let (img, lbl) = data.paths(split).map_err(CliError::Config)?;
    Ok(load_dataset(&img, &lbl, split)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(io_error(path))
}

fn cmd_train(args: TrainArgs, engine: Engine) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    let t = &mut cfg.train;
    if let Some(a) = &args.arch {
        t.arch = parse_arch(a)?;
    }
    macro_rules! flag {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { t.$f = v; } )* };
    }
    flag!(eta0, eta_min, decay, max_epochs, seed);
    if args.no_deform {
        t.deformations = false;
    }
    if args.no_shuffle {
        t.shuffle = false;
    }
    let verbosity = args.verbosity.unwrap_or(cfg.output.verbosity);
    let data = cfg.data.merged(&args.data.as_config());
    let out = args.out.clone().or(cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("runs/latest"));

    let mut train_set = load_split(&data, Split::Train)?;
    if let Some(n) = args.limit {
        train_set = train_set.truncated(n);
    }
    let test_set = load_split(&data, Split::Test)?;
    std::fs::create_dir_all(&out).map_err(io_error(&out))?;
    write_json(&out.join("config.json"), &cfg)?;

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        // A second handler registration fails only in tests running several
        // commands in one process; ignoring that is harmless.
        let _ = ctrlc::set_handler(move || stop.store(true, Ordering::Relaxed));
    }
    let resume = args.resume.as_deref().map(Checkpoint::load).transpose()?;
    let history = out.join("history.jsonl");
    if resume.is_none() && history.exists() {
        std::fs::remove_file(&history).map_err(io_error(&history))?;
    }
    let options = TrainOptions {
        engine: engine.clone(),
        checkpoint_dir: Some(out.clone()),
        history_path: Some(history),
        stop: Some(stop),
        instrument: args.instrument,
        pipeline: engine.is_parallel(),
        resume,
        progress: (verbosity != Verbosity::Quiet).then(|| Box::new(|s: &deepmlp::trainer::EpochStats| println!("{s}")) as Box<_>),
    };
    let result = train(&cfg.train, &train_set, options)?;
    let report = evaluate(&result.best.mlp, &test_set, &engine).map_err(|e| CliError::Config(e.to_string()))?;

    #[derive(serde::Serialize)]
    struct Summary<'a> {
        arch: String,
        weights: usize,
        epochs: u32,
        best_epoch: u32,
        best_validation_error_percent: f64,
        test_error_percent: f64,
        test_errors: usize,
        second_guess_correct: usize,
        checkpoint: &'a Path,
    }
    let best_path = out.join("best.dmlp");
    let summary = Summary {
        arch: cfg.train.arch.to_string(),
        weights: cfg.train.arch.count_weights(),
        epochs: result.history.last().map_or(0, |h| h.epoch),
        best_epoch: result.best.epoch,
        best_validation_error_percent: result.best.validation_error,
        test_error_percent: report.error_percent,
        test_errors: report.errors(),
        second_guess_correct: report.second_guess_correct,
        checkpoint: &best_path,
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "best epoch {} validation error {:.2}% test error {:.2}% ({} errors, second guess correct for {})",
        summary.best_epoch,
        summary.best_validation_error_percent,
        summary.test_error_percent,
        summary.test_errors,
        summary.second_guess_correct
    );
    if verbosity == Verbosity::Verbose {
        println!("{}", report.confusion_table());
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, engine: Engine) -> Result<(), CliError> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    ck.mlp.architecture().require_mnist().map_err(|e| {
        CliError::Config(format!("{}: checkpoint does not fit MNIST inputs: {e}", args.checkpoint.display()))
    })?;
    let data = DataConfig::default().merged(&args.data.as_config());
    let test = load_split(&data, Split::Test)?;
    let report = evaluate(&ck.mlp, &test, &engine).map_err(|e| CliError::Config(e.to_string()))?;
    println!("{}", report.summary());
    println!("{}", report.confusion_table());
    if let Some(out) = &args.out {
        let manifest = render_misclassified(&report, out).map_err(io_error(out))?;
        write_json(&out.join("report.json"), &report)?;
        println!("wrote {} images and {}", report.errors(), manifest.display());
    }
    Ok(())
}

fn cmd_deform_preview(args: PreviewArgs) -> Result<(), CliError> {
    let params = match &args.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Config)?.train.deform,
        None => Default::default(),
    };
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let data = DataConfig::default().merged(&args.data.as_config());
    let train_set = load_split(&data, Split::Train)?;
    if train_set.is_empty() {
        return Err(CliError::Config("training set is empty".into()));
    }
    std::fs::create_dir_all(&args.out).map_err(io_error(&args.out))?;
    let streams = Streams::new(args.seed);
    for k in 0..args.count {
        let i = k % train_set.len();
        let (img, label) = train_set.get(i);
        let mut rng = streams.stream(Purpose::Deform, 0, i as u64);
        let deformed = deform_image(&mut rng, img, label, &params);
        let path = args.out.join(format!("{k:04}_digit{}.pgm", label.digit()));
        pgm::write(&path, NORM_SIDE, NORM_SIDE, deformed.as_slice()).map_err(io_error(&path))?;
        if args.with_original {
            let path = args.out.join(format!("{k:04}_digit{}_orig.pgm", label.digit()));
            pgm::write(&path, NORM_SIDE, NORM_SIDE, upscale_28_to_29(img).as_slice()).map_err(io_error(&path))?;
        }
    }
    println!("wrote {} deformed digits to {}", args.count, args.out.display());
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let arch = parse_arch(&args.arch)?;
    if args.target >= arch.output_size() {
        return Err(CliError::Config(format!("--target {} out of range for {} outputs", args.target, arch.output_size())));
    }
    let streams = Streams::new(args.seed);
    let mlp: Mlp<f64> = Mlp::init(&mut streams.stream(Purpose::Init, 0, 0), &arch);
    let mut r = streams.stream(Purpose::Synthetic, 0, 0);
    let x: Vec<f64> = (0..arch.input_size()).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
    let g = gradient_check(&mlp, &x, args.target).map_err(|e| CliError::Config(e.to_string()))?;
    println!(
        "arch {arch} weights {} step {GRAD_CHECK_STEP:e} max_rel_error {:.3e} worst layer {} weight {}",
        g.n_weights, g.max_rel_error, g.worst.0, g.worst.1
    );
    if g.max_rel_error < args.tolerance {
        println!("gradient check passed (< {:e})", args.tolerance);
        Ok(())
    } else {
        Err(CliError::Verification(format!("gradient check failed: {:.3e} >= {:e}", g.max_rel_error, args.tolerance)))
    }
}

fn cmd_bench(args: BenchArgs, lanes: usize) -> Result<(), CliError> {
    let reports = match args.op {
        Op::Deform => vec![bench_deformation(args.images, lanes, None)],
        op => {
            let d = TileScheme::default();
            let scheme = TileScheme {
                segment: args.segment.unwrap_or(d.segment),
                tile: args.tile.unwrap_or(d.tile),
                staged_stride: args.staged_stride.unwrap_or(args.tile.map_or(d.staged_stride, |t| t + 1)),
                update_width: args.update_width.unwrap_or(d.update_width),
            };
            scheme.validate().map_err(CliError::Config)?;
            let mut b = KernelBench::new(parse_arch(&args.arch)?, args.reps, lanes);
            b.scheme = scheme;
            b.run(op)
        }
    };
    let lines: String = reports.iter().map(|r| r.to_json_line() + "\n").collect();
    match &args.out {
        Some(p) => {
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(p).map_err(io_error(p))?;
            f.write_all(lines.as_bytes()).map_err(io_error(p))?;
        }
        None => print!("{lines}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let lanes = cli.lanes.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let engine = Engine::with_lanes(lanes);
    let result = match cli.command {
        Command::Train(a) => cmd_train(a, engine),
        Command::Evaluate(a) => cmd_evaluate(a, engine),
        Command::DeformPreview(a) => cmd_deform_preview(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Bench(a) => cmd_bench(a, lanes),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("deepmlp: {e}");
            ExitCode::from(e.code())
        }
    }
}
