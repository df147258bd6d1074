//! The `nvolve` command line: `synth`, `train`, `optimize`, `sample`, `eval`
//! and `export`.
//!
//! Every command writes its outputs into `--out` together with a `run.toml`
//! recording the tool version, the raw arguments, and every resolved flag.
//! Exit codes are 0 on success, 1 on runtime failure and 2 on usage errors.
//! `NVOLVE_THREADS` caps the worker pool.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{Embedding, EmbeddingShape};
use crate::encoder::{train_with_observer, EncoderArchitecture, EncoderError, TrainConfig};
use crate::eval::{activation_report, emit_report, EvalError, ReportFormat};
use crate::objective::{NeuralObjective, ObjectiveError};
use crate::optimize::{optimize_tracking, OptimizeConfig, OptimizeError, Trajectory, TrajectoryError, DEFAULT_FRACTIONS};
use crate::persist::{
    export_trajectory, import_trajectory, load_checkpoint, load_dataset, read_atlas, read_embedding,
    read_embeddings, save_checkpoint, save_dataset, save_subject, step_file, to_toml, write_atlas, write_atomic,
    write_embedding, CheckpointMeta, PersistError, TRAJECTORY_MANIFEST,
};
use crate::synthetic::{Nonlinearity, SubjectSpec, SyntheticSubject, DESK_SHAPE};

pub const RUN_MANIFEST: &str = "run.toml";

#[derive(Debug, Parser)]
#[command(name = "nvolve", version, about = "Brain-guided embedding optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic subject, its atlas, and train/val datasets.
    Synth(SynthArgs),
    /// Train a voxel-wise encoder on a synthesized dataset.
    Train(TrainArgs),
    /// Optimize embeddings against a neural objective.
    Optimize(OptimizeArgs),
    /// Pick embeddings from a trajectory at progress fractions.
    Sample(SampleArgs),
    /// Compare predicted activations of a random pool and generated embeddings.
    Eval(EvalArgs),
    /// Write a trajectory handoff directory with sampled embeddings and a progress table.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum NonlinearityArg {
    Linear,
    Relu,
}

impl From<NonlinearityArg> for Nonlinearity {
    fn from(n: NonlinearityArg) -> Self {
        match n {
            NonlinearityArg::Linear => Nonlinearity::Linear,
            NonlinearityArg::Relu => Nonlinearity::Relu,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// Regions as NAME:SIZE pairs, e.g. FFA:10,PPA:10.
    #[arg(long, required = true, value_delimiter = ',', value_parser = parse_region)]
    regions: Vec<(String, usize)>,
    /// Voxels outside every region.
    #[arg(long, default_value_t = 0)]
    background: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    sessions: usize,
    /// Fraction of samples held out for validation (taken from the end).
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Gaussian noise standard deviation added to responses.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = NonlinearityArg::Linear)]
    nonlinearity: NonlinearityArg,
    /// Inner product between the planted directions of distinct regions.
    #[arg(long, default_value_t = 0.0)]
    overlap: f64,
    #[arg(long, default_value_t = 0.0)]
    bias_sigma: f64,
    #[arg(long, default_value_t = DESK_SHAPE.0)]
    tokens: usize,
    #[arg(long, default_value_t = DESK_SHAPE.1)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Directory written by `synth` (uses its train/ and val/ datasets).
    #[arg(long)]
    data: PathBuf,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_values_t = [256usize, 128, 64])]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    max_epochs: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct OptimizeArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    atlas: PathBuf,
    /// Objective such as "+FFA -PPA:0.5".
    #[arg(long, allow_hyphen_values = true)]
    objective: String,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// Seed of the random start embedding (and of the first run with --runs).
    #[arg(long, default_value_t = 0, conflicts_with = "seed_embedding")]
    seed: u64,
    /// Start from a stored embedding instead of a random one.
    #[arg(long)]
    seed_embedding: Option<PathBuf>,
    /// Keep every Nth embedding (steps 0 and T are always kept).
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Independent runs with seeds seed, seed+1, ...; each gets its own directory.
    #[arg(long, default_value_t = 1, conflicts_with = "seed_embedding")]
    runs: usize,
    /// Runs optimized concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write samples at these fractions into each trajectory's samples/.
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction)]
    fractions: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SampleArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction, default_values_t = DEFAULT_FRACTIONS)]
    fractions: Vec<f64>,
    /// Defaults to <trajectory>/samples.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    atlas: PathBuf,
    /// Regions to report.
    #[arg(long, required = true, value_delimiter = ',')]
    region: Vec<String>,
    /// Generated embeddings: NVTF files or trajectory directories (best recorded step).
    #[arg(long, required = true, num_args = 1..)]
    generated: Vec<PathBuf>,
    /// Pool embeddings as an NVTF stack. Without it a random pool is drawn.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pool_size: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pool_seed: u64,
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Also write an SVG box plot.
    #[arg(long)]
    plot: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ExportArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction, default_values_t = DEFAULT_FRACTIONS)]
    fractions: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_region(s: &str) -> Result<(String, usize), String> {
    let (name, size) = s
        .split_once(':')
        .ok_or_else(|| format!("expected NAME:SIZE, got {s:?}"))?;
    let size = size.parse().map_err(|_| format!("invalid region size {size:?}"))?;
    Ok((name.to_string(), size))
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(f) if f > 0.0 && f <= 1.0 => Ok(f),
        Ok(f) => Err(format!("fraction {f} is outside (0, 1]")),
        Err(_) => Err(format!("invalid fraction {s:?}")),
    }
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(PersistError, EncoderError, OptimizeError, TrajectoryError, std::io::Error);

impl From<ObjectiveError> for CliError {
    fn from(e: ObjectiveError) -> Self {
        match e {
            ObjectiveError::Parse(p) => CliError::Usage(format!("invalid objective: {p}")),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::ZeroK | EvalError::KTooLarge { .. } | EvalError::Empty => CliError::Usage(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn require_path(p: &Path, what: &str) -> Result<(), CliError> {
    if p.exists() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", p.display())))
    }
}

#[derive(Serialize)]
struct RunManifest<'a, A: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    /// Arguments exactly as given, excluding the program name.
    argv: Vec<String>,
    threads: usize,
    flags: &'a A,
}

struct Ctx<'a> {
    argv: Vec<String>,
    threads: usize,
    out: &'a mut (dyn Write + Send),
}

impl Ctx<'_> {
    fn manifest<A: Serialize>(&self, dir: &Path, subcommand: &'static str, flags: &A) -> Result<(), CliError> {
        let m = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            argv: self.argv.clone(),
            threads: self.threads,
            flags,
        };
        std::fs::create_dir_all(dir).map_err(|e| PersistError::io(dir, e))?;
        write_atomic(&dir.join(RUN_MANIFEST), to_toml(&m)?.as_bytes())?;
        Ok(())
    }
}

/// Runs the CLI with the process's standard streams and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// As [`run`], writing the summary to `out` and diagnostics to `err`.
pub fn run_with<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let threads = match thread_count() {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return 1;
        }
    };
    let mut ctx = Ctx {
        argv: args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
        threads,
        out,
    };
    let result = pool.install(|| match &cli.command {
        Command::Synth(a) => cmd_synth(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::Optimize(a) => cmd_optimize(&mut ctx, a),
        Command::Sample(a) => cmd_sample(&mut ctx, a),
        Command::Eval(a) => cmd_eval(&mut ctx, a),
        Command::Export(a) => cmd_export(&mut ctx, a),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn thread_count() -> Result<usize, CliError> {
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("NVOLVE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(usage(format!("NVOLVE_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(default),
    }
}

fn cmd_synth(ctx: &mut Ctx<'_>, a: &SynthArgs) -> Result<(), CliError> {
    let shape = EmbeddingShape::new(a.tokens, a.dim).map_err(|e| usage(e.to_string()))?;
    if !(0.0..1.0).contains(&a.val_fraction) {
        return Err(usage(format!("--val-fraction must be in [0, 1), got {}", a.val_fraction)));
    }
    let n_val = ((a.samples as f64 * a.val_fraction).round() as usize).max(2);
    if n_val >= a.samples {
        return Err(usage(format!("{} samples leave nothing to train on", a.samples)));
    }
    let spec = SubjectSpec {
        shape,
        regions: a.regions.clone(),
        background_voxels: a.background,
        noise_sigma: a.noise,
        nonlinearity: a.nonlinearity.into(),
        direction_overlap: a.overlap,
        bias_sigma: a.bias_sigma,
        seed: a.seed,
    };
    let subject = SyntheticSubject::generate(spec).map_err(|e| usage(e.to_string()))?;
    let ds = subject
        .make_dataset(a.samples, a.sessions, a.seed)
        .map_err(|e| usage(e.to_string()))?;
    let (train, val) = ds.split_at(a.samples - n_val)?;

    save_subject(&a.out.join("subject"), &subject)?;
    write_atlas(&a.out.join("atlas.txt"), subject.atlas())?;
    save_dataset(&a.out.join("train"), &train)?;
    save_dataset(&a.out.join("val"), &val)?;
    ctx.manifest(&a.out, "synth", a)?;
    writeln!(
        ctx.out,
        "subject {} voxels ({} regions), {} train / {} val samples -> {}",
        subject.n_voxels(),
        subject.atlas().len(),
        train.len(),
        val.len(),
        a.out.display()
    )?;
    Ok(())
}

fn cmd_train(ctx: &mut Ctx<'_>, a: &TrainArgs) -> Result<(), CliError> {
    require_path(&a.data, "dataset directory")?;
    let train_set = load_dataset(&a.data.join("train"))?;
    let val_set = load_dataset(&a.data.join("val"))?;
    let shape = train_set.shape();
    let arch = EncoderArchitecture::new(shape.len(), a.hidden.clone(), train_set.n_voxels())
        .map_err(|e| usage(e.to_string()))?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        max_epochs: a.max_epochs,
        patience: a.patience,
        batch_size: a.batch_size,
        weight_decay: a.weight_decay,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (model, log) = train_with_observer(&train_set, &val_set, &arch, &cfg, |_| {})?;
    let meta = CheckpointMeta::new(shape, arch).with_training(&cfg, &log);
    save_checkpoint(&a.out, &model, &meta, Some(&log))?;
    ctx.manifest(&a.out, "train", a)?;
    let best = log.best().map_or(f64::NAN, |b| b.val_mean_r);
    writeln!(
        ctx.out,
        "trained {} epochs (best {}), val mean R = {best:.4} -> {}",
        log.epochs.len(),
        log.best_epoch,
        a.out.display()
    )?;
    Ok(())
}

fn cmd_optimize(ctx: &mut Ctx<'_>, a: &OptimizeArgs) -> Result<(), CliError> {
    require_path(&a.model, "checkpoint")?;
    require_path(&a.atlas, "atlas")?;
    let (model, meta) = load_checkpoint(&a.model)?;
    let atlas = read_atlas(&a.atlas)?;
    let obj = NeuralObjective::from_text(&a.objective, &atlas, model.n_voxels())?;
    if a.runs == 0 {
        return Err(usage("--runs must be >= 1"));
    }
    let cfg = OptimizeConfig {
        steps: a.steps,
        learning_rate: a.lr,
        record_every: a.record_every,
        seed: a.seed,
        ..OptimizeConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let starts: Vec<(u64, Embedding)> = match &a.seed_embedding {
        Some(p) => vec![(a.seed, read_embedding(p)?)],
        None => (0..a.runs as u64)
            .map(|i| (a.seed + i, Embedding::random(meta.shape, a.seed + i)))
            .collect(),
    };
    let jobs = a.jobs.unwrap_or(ctx.threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        starts
            .par_iter()
            .map(|(seed, q0)| optimize_tracking(&model, &obj, &atlas, q0, &OptimizeConfig { seed: *seed, ..cfg }))
            .collect()
    });

    for ((seed, _), result) in starts.iter().zip(results) {
        let traj = match result {
            Ok(t) => t,
            Err(OptimizeError::NonFiniteLoss { step, partial }) => {
                let dir = run_dir(&a.out, a.runs, *seed);
                export_trajectory(&partial, &dir)?;
                return Err(CliError::Runtime(format!(
                    "non-finite loss at step {step} (seed {seed}); partial trajectory written to {}",
                    dir.display()
                )));
            }
            Err(e) => return Err(e.into()),
        };
        let dir = run_dir(&a.out, a.runs, *seed);
        export_trajectory(&traj, &dir)?;
        if let Some(fr) = &a.fractions {
            write_samples(&traj, fr, &dir.join("samples"))?;
        }
        let best = traj.best();
        writeln!(
            ctx.out,
            "seed {seed}: loss {:.6} -> {:.6} (best at step {}) -> {}",
            traj.initial().loss,
            best.loss,
            best.step,
            dir.display()
        )?;
    }
    ctx.manifest(&a.out, "optimize", a)?;
    Ok(())
}

fn run_dir(out: &Path, runs: usize, seed: u64) -> PathBuf {
    if runs == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("seed_{seed}"))
    }
}

fn sample_file(fraction: f64, step: usize) -> String {
    format!("f{fraction}_step_{step:06}.nvtf")
}

/// `fraction,step,file` listing.
fn samples_csv(rows: &[(f64, usize, String)]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["fraction", "step", "file"]).map_err(csv_err)?;
    for (f, step, file) in rows {
        w.write_record([f.to_string(), step.to_string(), file.clone()]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Writes one embedding per fraction plus `samples.csv`.
fn write_samples(traj: &Trajectory, fractions: &[f64], dir: &Path) -> Result<Vec<(f64, usize)>, CliError> {
    let samples = traj.sample_at_fractions(fractions)?;
    std::fs::create_dir_all(dir).map_err(|e| PersistError::io(dir, e))?;
    let mut rows = Vec::with_capacity(samples.len());
    for s in &samples {
        let name = sample_file(s.fraction, s.step);
        write_embedding(&dir.join(&name), &s.embedding)?;
        rows.push((s.fraction, s.step, name));
    }
    write_atomic(&dir.join("samples.csv"), &samples_csv(&rows)?)?;
    Ok(samples.iter().map(|s| (s.fraction, s.step)).collect())
}

fn load_trajectory(dir: &Path) -> Result<Trajectory, CliError> {
    if !dir.join(TRAJECTORY_MANIFEST).is_file() {
        return Err(usage(format!("{} is not a trajectory directory", dir.display())));
    }
    Ok(import_trajectory(dir)?)
}

fn cmd_sample(ctx: &mut Ctx<'_>, a: &SampleArgs) -> Result<(), CliError> {
    let traj = load_trajectory(&a.trajectory)?;
    let out = a.out.clone().unwrap_or_else(|| a.trajectory.join("samples"));
    let picked = write_samples(&traj, &a.fractions, &out)?;
    ctx.manifest(&out, "sample", a)?;
    for (f, step) in picked {
        writeln!(ctx.out, "fraction {f}: step {step}")?;
    }
    Ok(())
}

fn load_generated(paths: &[PathBuf]) -> Result<Vec<Embedding>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        require_path(p, "generated input")?;
        if p.is_dir() {
            let t = load_trajectory(p)?;
            let best = t.sample_at_fractions(&[1.0])?;
            out.extend(best.into_iter().map(|s| s.embedding));
        } else {
            out.extend(read_embeddings(p)?);
        }
    }
    Ok(out)
}

fn cmd_eval(ctx: &mut Ctx<'_>, a: &EvalArgs) -> Result<(), CliError> {
    require_path(&a.model, "checkpoint")?;
    require_path(&a.atlas, "atlas")?;
    if a.k == 0 {
        return Err(usage("--k must be >= 1"));
    }
    let (model, meta) = load_checkpoint(&a.model)?;
    let atlas = read_atlas(&a.atlas)?;
    atlas.validate(model.n_voxels()).map_err(|e| usage(e.to_string()))?;
    let pool = match &a.pool {
        Some(p) => {
            require_path(p, "pool")?;
            read_embeddings(p)?
        }
        None => Embedding::random_pool(meta.shape, a.pool_size, a.pool_seed),
    };
    let generated = load_generated(&a.generated)?;
    let mut reports = Vec::new();
    for region in &a.region {
        if atlas.get(region).is_none() {
            return Err(usage(format!("unknown region {region:?}")));
        }
        reports.push(activation_report(&model, &atlas, region, &pool, &generated, a.k)?);
    }
    std::fs::create_dir_all(&a.out).map_err(|e| PersistError::io(&a.out, e))?;
    emit_report(&reports, &a.out.join("report.csv"), ReportFormat::Csv)?;
    if a.plot {
        emit_report(&reports, &a.out.join("report.svg"), ReportFormat::Svg)?;
    }
    ctx.manifest(&a.out, "eval", a)?;
    for r in &reports {
        writeln!(
            ctx.out,
            "{}: pool max {:.4}, top-{} pool [{:.4}, {:.4}], generated [{:.4}, {:.4}]{}",
            r.region,
            r.pool.max,
            r.k,
            r.top_pool.min,
            r.top_pool.max,
            r.generated.min,
            r.generated.max,
            if r.generated_beats_pool() { " (generated > pool)" } else { "" }
        )?;
    }
    Ok(())
}

fn cmd_export(ctx: &mut Ctx<'_>, a: &ExportArgs) -> Result<(), CliError> {
    let traj = load_trajectory(&a.trajectory)?;
    // Fails early, with the --record-every advice, if a selected step has no embedding.
    let samples = traj.sample_at_fractions(&a.fractions)?;
    let steps: Vec<usize> = samples.iter().map(|s| s.step).collect();
    let handoff = traj.keep_embeddings(|step| steps.contains(&step));
    export_trajectory(&handoff, &a.out)?;
    let rows: Vec<_> = samples.iter().map(|s| (s.fraction, s.step, step_file(s.step))).collect();
    write_atomic(&a.out.join("samples.csv"), &samples_csv(&rows)?)?;
    write_atomic(&a.out.join("progress.csv"), progress_csv(&traj)?.as_bytes())?;
    ctx.manifest(&a.out, "export", a)?;
    writeln!(
        ctx.out,
        "exported {} points ({} sampled) -> {}",
        traj.points().len(),
        steps.len(),
        a.out.display()
    )?;
    Ok(())
}

/// `step,loss,best_loss,progress,<region>...` for every recorded point.
fn progress_csv(traj: &Trajectory) -> Result<String, CliError> {
    let regions: Vec<String> = traj.initial().region_means.keys().cloned().collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    let mut header = vec!["step".to_string(), "loss".into(), "best_loss".into(), "progress".into()];
    header.extend(regions.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    let progress = traj.progress();
    for ((p, best), prog) in traj.points().iter().zip(traj.best_loss_so_far()).zip(progress) {
        let mut row = vec![p.step.to_string(), p.loss.to_string(), best.to_string(), prog.to_string()];
        row.extend(regions.iter().map(|r| p.region_means.get(r).map_or(String::new(), f64::to_string)));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
