// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod manifest;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use flowgebd_core::ensemble::{predict, DetectConfig};
use flowgebd_core::eval::{
    default_taus, evaluate_dataset, AnnotationFile, AnnotatorMode, VideoAnnotation,
};
use flowgebd_core::fnorm::{patchflow_series, write_series_csv};
use flowgebd_core::frame_io::DEFAULT_TARGET_FPS;
use flowgebd_core::grid::{make_grid, PatchGrid};
use flowgebd_core::pt::{Sampler, SurvivalRule};
use flowgebd_core::refine::Method;
use flowgebd_core::synth::{self, SynthKind, SynthSpec};

use manifest::{default_video_id, InputKind, Manifest, VideoEntry};
use sweep::Range;

#[derive(Parser, Debug)]
#[command(
    name = "flowgebd",
    version,
    about = "Unsupervised event boundary detection from optical flow"
)]
struct Cli {
    /// Worker threads (FLOWGEBD_THREADS overrides; default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect boundaries in one video or a batch.
    Detect(DetectArgs),
    /// Score predictions against annotations.
    Eval(EvalArgs),
    /// F1 over a threshold grid on a labeled corpus.
    Sweep(SweepArgs),
    /// Generate synthetic videos with exact ground truth.
    Synth(SynthArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Pt,
    Fn,
    Ensemble,
}

impl From<ModeArg> for Method {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pt => Method::Pt,
            ModeArg::Fn => Method::Fn,
            ModeArg::Ensemble => Method::Ensemble,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SamplerArg {
    Uniform,
    ShiTomasi,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SurvivalArg {
    Tracked,
    NonZero,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AnnotatorArg {
    Max,
    Mean,
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok((parse(w)?, parse(h)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

#[derive(Args, Debug)]
struct Thresholds {
    /// Tracking survival ratio below which a boundary fires.
    #[arg(long, default_value_t = 0.4)]
    theta1: f64,
    /// Normalized flow magnitude above which a boundary fires.
    #[arg(long, default_value_t = 0.25)]
    theta2: f64,
    /// Clustering gap in seconds.
    #[arg(long, default_value_t = 0.5)]
    theta3: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let d = DetectConfig::default();
        Self {
            theta1: d.pt.theta1,
            theta2: d.fn_.theta2,
            theta3: d.refine.theta3,
        }
    }
}

/// Loading, grid and detector knobs shared by `detect` and `sweep`.
#[derive(Args, Debug)]
struct PipelineArgs {
    /// Square grid size n (n_w = n_h = n); 1 is framewise.
    #[arg(long, default_value_t = 5, conflicts_with = "grid")]
    grid_n: usize,
    /// Rectangular grid, e.g. 5x4.
    #[arg(long, value_parser = parse_dims)]
    grid: Option<(usize, usize)>,
    /// Sampling rate after preprocessing.
    #[arg(long, default_value_t = DEFAULT_TARGET_FPS)]
    fps: f64,
    /// Frame size after preprocessing, `N` or `WxH`.
    #[arg(long, value_parser = parse_dims, default_value = "160")]
    size: (usize, usize),
    #[arg(long, value_enum, default_value_t = SamplerArg::Uniform)]
    sampler: SamplerArg,
    /// Which tracked points count as surviving.
    #[arg(long, value_enum, default_value_t = SurvivalArg::Tracked)]
    survival: SurvivalArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn grid_dims(&self) -> (usize, usize) {
        self.grid.unwrap_or((self.grid_n, self.grid_n))
    }

    fn detect_config(&self, t: &Thresholds, raw: bool) -> DetectConfig {
        let mut cfg = DetectConfig::default();
        cfg.pt.theta1 = t.theta1;
        cfg.pt.seed = self.seed;
        cfg.pt.sampler = match self.sampler {
            SamplerArg::Uniform => Sampler::UniformRandom,
            SamplerArg::ShiTomasi => Sampler::ShiTomasi,
        };
        cfg.pt.survival = match self.survival {
            SurvivalArg::Tracked => SurvivalRule::Tracked,
            SurvivalArg::NonZero => SurvivalRule::NonZeroDisplacement,
        };
        cfg.fn_.theta2 = t.theta2;
        cfg.refine.theta3 = t.theta3;
        cfg.raw = raw;
        cfg
    }

    /// Rejects bad values as usage errors before any work starts.
    fn check(&self, t: &Thresholds, raw: bool) {
        let (n_w, n_h) = self.grid_dims();
        let fail = |msg: String| -> ! { Cli::command().error(ErrorKind::InvalidValue, msg).exit() };
        if let Err(e) = self.detect_config(t, raw).validate() {
            fail(e.to_string());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            fail(format!("--fps must be positive, got {}", self.fps));
        }
        if let Err(e) = make_grid(self.size.0, self.size.1, n_w, n_h) {
            fail(e.to_string());
        }
    }
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Ensemble)]
    mode: ModeArg,
    /// Image directory, .y4m file or raw .yuv file.
    #[arg(long, required_unless_present = "batch", conflicts_with = "batch")]
    input: Option<PathBuf>,
    /// Manifest `{"videos": [{"video_id", "input", "kind", "fps_native"}]}`.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Input kind; inferred from the path when omitted.
    #[arg(long, value_enum)]
    kind: Option<InputKind>,
    /// Native frame rate of image directories and raw YUV.
    #[arg(long)]
    fps_native: Option<f64>,
    /// JSON sidecar describing a raw YUV file.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    video_id: Option<String>,
    /// Output directory for `<video_id>.json`.
    #[arg(long)]
    out: PathBuf,
    /// Emit deduplicated raw candidates instead of clustering (pt and fn modes).
    #[arg(long)]
    no_refine: bool,
    /// Also write per-patch flow series CSVs into this directory.
    #[arg(long)]
    dump_series: Option<PathBuf>,
    #[command(flatten)]
    thresholds: Thresholds,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory of `<video_id>.json` predictions.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Directory for report.json, report.csv and per_video.csv.
    #[arg(long)]
    out: PathBuf,
    /// Relative distance thresholds (default 0.05..0.5 step 0.05).
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = AnnotatorArg::Max)]
    annotator_mode: AnnotatorArg,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    batch: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// `start:stop:step` or a single value.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    theta1: Range,
    #[arg(long, default_value = "0.1:0.9:0.1")]
    theta2: Range,
    #[arg(long, default_value = "0.5:3.0:0.5")]
    theta3: Range,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "pt,fn,ensemble"
    )]
    modes: Vec<ModeArg>,
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = AnnotatorArg::Max)]
    annotator_mode: AnnotatorArg,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKindArg,
    /// Event times in seconds (single-video mode).
    #[arg(long, value_delimiter = ',', conflicts_with = "count")]
    events: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 4.0)]
    fps: f64,
    #[arg(long, value_parser = parse_dims, default_value = "160")]
    size: (usize, usize),
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    video_id: Option<String>,
    /// Corpus mode: N random videos seeded `seed..seed+N`, plus manifest.json
    /// and annotations.json in `out`.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_events: usize,
    #[arg(long, default_value_t = 4)]
    max_events: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SynthKindArg {
    SceneCut,
    MotionOnset,
    MovingDot,
    Static,
}

impl From<SynthKindArg> for SynthKind {
    fn from(k: SynthKindArg) -> Self {
        match k {
            SynthKindArg::SceneCut => SynthKind::SceneCut,
            SynthKindArg::MotionOnset => SynthKind::MotionOnset,
            SynthKindArg::MovingDot => SynthKind::MovingDot,
            SynthKindArg::Static => SynthKind::Static,
        }
    }
}

fn annotator_mode(a: AnnotatorArg) -> AnnotatorMode {
    match a {
        AnnotatorArg::Max => AnnotatorMode::Max,
        AnnotatorArg::Mean => AnnotatorMode::Mean,
    }
}

fn thread_count(flag: Option<usize>) -> Option<usize> {
    match std::env::var("FLOWGEBD_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => Cli::command()
                .error(
                    ErrorKind::InvalidValue,
                    format!("FLOWGEBD_THREADS={v:?} is not a positive integer"),
                )
                .exit(),
        },
        Err(_) => flag,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads) {
        if n == 0 {
            Cli::command()
                .error(ErrorKind::InvalidValue, "--threads must be positive")
                .exit();
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::FAILURE;
        }
    };

    let result = pool.install(|| match cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_entries(
    input: Option<PathBuf>,
    batch: Option<&Path>,
    a: &DetectArgs,
) -> Result<Vec<VideoEntry>> {
    if let Some(b) = batch {
        return Ok(Manifest::load(b)?.videos);
    }
    let input = input.expect("clap enforces --input or --batch");
    Ok(vec![VideoEntry {
        video_id: a
            .video_id
            .clone()
            .unwrap_or_else(|| default_video_id(&input)),
        input,
        kind: a.kind,
        fps_native: a.fps_native,
        sidecar: a.sidecar.clone(),
    }])
}

fn detect_one(entry: &VideoEntry, a: &DetectArgs, cfg: &DetectConfig) -> Result<PathBuf> {
    let p = &a.pipeline;
    let seq = entry.load(p.fps, p.size)?;
    let (w, h) = seq.dimensions().context("empty video")?;
    let (n_w, n_h) = p.grid_dims();
    let grid: PatchGrid = make_grid(w, h, n_w, n_h)?;
    let pred = predict(&entry.video_id, &seq, &grid, a.mode.into(), cfg)
        .with_context(|| format!("{}: detection failed", entry.video_id))?;
    if let Some(dir) = &a.dump_series {
        std::fs::create_dir_all(dir)?;
        let series = patchflow_series(&seq, &grid, &cfg.fn_.flow)?;
        write_series_csv(&series, &dir.join(format!("{}.csv", entry.video_id)))?;
    }
    log::info!("{}: {} boundaries", entry.video_id, pred.boundaries_s.len());
    Ok(pred.save(&a.out)?)
}

fn cmd_detect(a: DetectArgs) -> Result<()> {
    a.pipeline.check(&a.thresholds, a.no_refine);
    let cfg = a.pipeline.detect_config(&a.thresholds, a.no_refine);
    let entries = load_entries(a.input.clone(), a.batch.as_deref(), &a)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let results: Vec<Result<PathBuf>> = entries
        .par_iter()
        .map(|e| detect_one(e, &a, &cfg))
        .collect();
    let mut failed = 0;
    for (e, r) in entries.iter().zip(results) {
        match r {
            Ok(path) => println!("{}", path.display()),
            Err(err) => {
                failed += 1;
                log::error!("{}: {err:#}", e.video_id);
                eprintln!("error: {}: {err:#}", e.video_id);
            }
        }
    }
    if failed > 0 {
        anyhow::bail!("{failed} of {} videos failed", entries.len());
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let taus = a.taus.unwrap_or_else(default_taus);
    let report = evaluate_dataset(
        &a.pred,
        &a.annotations,
        &taus,
        annotator_mode(a.annotator_mode),
    )?;
    report.write(&a.out)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    // thresholds come from the ranges; the rest of the config is shared
    let defaults = Thresholds::default();
    a.pipeline.check(&defaults, false);
    let cfg = a.pipeline.detect_config(&defaults, false);
    let manifest = Manifest::load(&a.batch)?;
    let annotations = AnnotationFile::load(&a.annotations)?;
    let p = &a.pipeline;
    let (n_w, n_h) = p.grid_dims();
    let videos = manifest
        .videos
        .par_iter()
        .map(|e| {
            let seq = e.load(p.fps, p.size)?;
            let (w, h) = seq.dimensions().context("empty video")?;
            Ok((e.video_id.clone(), seq, make_grid(w, h, n_w, n_h)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let modes: Vec<Method> = a.modes.iter().map(|&m| m.into()).collect();
    let plan = sweep::SweepPlan {
        theta1: &a.theta1.0,
        theta2: &a.theta2.0,
        theta3: &a.theta3.0,
        modes: &modes,
        tau: a.tau,
        mode: annotator_mode(a.annotator_mode),
    };
    let csv = sweep::run(&videos, &annotations, &cfg, &plan)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&a.out, csv).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let kind: SynthKind = a.kind.into();
    let Some(count) = a.count else {
        let spec = SynthSpec {
            kind,
            duration_s: a.duration,
            fps: a.fps,
            size: a.size,
            events: a.events.clone(),
            texture_seed: a.seed,
        };
        let id = a
            .video_id
            .clone()
            .unwrap_or_else(|| default_video_id(&a.out));
        synth::generate(&spec, &id, &a.out)?;
        return Ok(());
    };
    if a.min_events > a.max_events {
        Cli::command()
            .error(ErrorKind::InvalidValue, "--min-events exceeds --max-events")
            .exit();
    }
    let prefix = kind_name(kind);
    let videos: Vec<(VideoEntry, VideoAnnotation)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = a.seed + i;
            let spec = synth::random_spec(
                kind,
                seed,
                a.duration,
                a.fps,
                a.size,
                a.min_events,
                a.max_events,
            );
            let id = format!("{prefix}_{seed:03}");
            let video = synth::render(&spec, &id)?;
            synth::write_frames(&video.frames, &a.out.join(&id))?;
            let entry = VideoEntry {
                video_id: id.clone(),
                input: PathBuf::from(&id),
                kind: Some(InputKind::ImageDir),
                fps_native: Some(a.fps),
                sidecar: None,
            };
            Ok((entry, video.annotation))
        })
        .collect::<Result<_>>()?;
    let (entries, anns): (Vec<_>, Vec<_>) = videos.into_iter().unzip();
    Manifest { videos: entries }.save(&a.out.join("manifest.json"))?;
    AnnotationFile { videos: anns }.save(&a.out.join("annotations.json"))?;
    println!("{count} videos in {}", a.out.display());
    Ok(())
}

fn kind_name(kind: SynthKind) -> &'static str {
    match kind {
        SynthKind::SceneCut => "scene-cut",
        SynthKind::MotionOnset => "motion-onset",
        SynthKind::MovingDot => "moving-dot",
        SynthKind::Static => "static",
    }
}
