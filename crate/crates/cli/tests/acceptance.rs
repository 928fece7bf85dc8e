//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Runs the criteria one after another so
//! the timing budgets are measured without competing test threads.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use flowgebd_core::ensemble::{ensemble, DetectConfig};
use flowgebd_core::eval::{
    default_taus, evaluate, evaluate_dataset, match_boundaries, score_counts, AnnotationFile,
    AnnotatorMode, PredictionMap,
};
use flowgebd_core::fnorm::{detect_fn, FnConfig, PatchFlowSeries};
use flowgebd_core::grid::make_grid;
use flowgebd_core::kernels::min_eigen_scores;
use flowgebd_core::refine::refine_timestamps;
use flowgebd_core::synth::{random_spec, render, smoothed_noise, SynthKind};
use flowgebd_core::{FrameSequence, LumaFrame};
use support::SplitMix;

// Pinned tolerances and budgets.
const LK_MAX_ERR_PX: &str = "0.25";
const LK_MIN_FRACTION: f64 = 0.95;
const FARNEBACK_MAX_MEDIAN_ERR_PX: f64 = 0.5;
const TRANSLATION_BUDGET_S: f64 = 30.0;
const EIGEN_MAX_REL_ERR: f64 = 1e-6;
const SCENE_CUT_MIN_F1: f64 = 0.90;
const SCENE_CUT_BUDGET_S: f64 = 120.0;
const MOTION_ONSET_MIN_F1: f64 = 0.80;
const DOT_MIN_ENERGY: f64 = 0.90;
const LATENCY_TARGET_MS: f64 = 10.0;
const LATENCY_LIMIT_MS: f64 = 25.0;

type Check = fn() -> (bool, String);

fn main() {
    let checks: [(&str, Check); 10] = [
        ("kernel translation oracle", translation),
        ("shi-tomasi brute-force equivalence", shi_tomasi),
        ("patch counts", patch_counts),
        ("refinement traces and properties", refinement),
        ("scene-cut corpus, ensemble", scene_cut_corpus),
        (
            "motion-onset corpus and moving-dot localization",
            motion_onset_corpus,
        ),
        ("flow normalization analytic cases", fn_analytic),
        ("evaluation golden fixture and properties", evaluation),
        ("determinism across thread counts", determinism),
        ("ensemble latency", latency),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = check();
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {detail} ({:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn single_thread<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn translation() -> (bool, String) {
    let t = Instant::now();
    let s = support::translation_oracle(0..20, 160);
    let secs = t.elapsed().as_secs_f64();
    let ok = s.pairs == 720
        && s.lk_fraction() >= LK_MIN_FRACTION
        && s.farneback_worst_median_err <= FARNEBACK_MAX_MEDIAN_ERR_PX
        && secs < TRANSLATION_BUDGET_S;
    let detail = format!(
        "{} pairs; LK {}/{} tracked points within {LK_MAX_ERR_PX} px ({:.4}, need {LK_MIN_FRACTION}); \
         worst Farneback median error {:.3} px (limit {FARNEBACK_MAX_MEDIAN_ERR_PX}); {secs:.1} s (limit {TRANSLATION_BUDGET_S})",
        s.pairs,
        s.lk_within,
        s.lk_tracked,
        s.lk_fraction(),
        s.farneback_worst_median_err
    );
    (ok, detail)
}

fn shi_tomasi() -> (bool, String) {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let f = support::noise_frame(48, 48, 1000 + seed);
        for (a, b) in min_eigen_scores(&f)
            .iter()
            .zip(support::brute_force_min_eigen(&f))
        {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    (
        worst < EIGEN_MAX_REL_ERR,
        format!(
            "10 frames 48x48, worst relative error {worst:.2e} (limit {EIGEN_MAX_REL_ERR:.0e})"
        ),
    )
}

fn patch_counts() -> (bool, String) {
    let mut bad = Vec::new();
    for n_w in 1..=8 {
        for n_h in 1..=8 {
            let n = make_grid(160, 160, n_w, n_h).map(|g| g.len()).unwrap_or(0);
            if n != n_w * n_h + (n_w - 1) * (n_h - 1) {
                bad.push(format!("{n_w}x{n_h}"));
            }
        }
    }
    let g5 = make_grid(160, 160, 5, 5).unwrap();
    let five = g5.len() == 41 && g5.patches().iter().all(|p| (p.width, p.height) == (32, 32));
    let four = make_grid(160, 160, 4, 4).unwrap().len() == 25;
    (
        bad.is_empty() && five && four,
        format!("64 grid shapes checked, mismatches {bad:?}; 5x5 -> 41 of 32x32: {five}; 4x4 -> 25: {four}"),
    )
}

fn refinement() -> (bool, String) {
    let traces = refine_timestamps(&[1.0, 1.2, 3.0], 0.5) == [1.0, 3.0]
        && refine_timestamps(&[2.0], 0.5) == [2.0]
        && refine_timestamps(&[2.0], 3.0) == [2.0]
        && refine_timestamps(&[1.0, 1.2, 1.4, 1.6], 0.5) == [1.2];
    let mut rng = SplitMix(4);
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.below(40) as usize;
        let raw: Vec<f64> = (0..n).map(|_| (1 + rng.below(160)) as f64 * 0.25).collect();
        let theta3 = [0.25, 0.5, 1.0, 0.1 + 2.9 * rng.unit()][rng.below(4) as usize];
        let out = refine_timestamps(&raw, theta3);
        let mut shuffled = raw.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let ok = out.windows(2).all(|w| w[1] - w[0] >= theta3)
            && refine_timestamps(&out, theta3) == out
            && out.iter().all(|t| raw.contains(t))
            && refine_timestamps(&shuffled, theta3) == out;
        if !ok {
            violations += 1;
        }
    }
    (
        traces && violations == 0,
        format!(
            "golden traces {}; 1000 random multisets, {violations} property violations",
            if traces { "match" } else { "DIFFER" }
        ),
    )
}

/// Corpus F1 of `method_fn` over rendered videos, under max-annotator mode.
fn corpus_f1(
    kind: SynthKind,
    seeds: std::ops::Range<u64>,
    tau: f64,
    detect: impl Fn(&FrameSequence) -> Vec<f64> + Sync,
) -> f64 {
    let mut preds = PredictionMap::new();
    let mut anns = AnnotationFile::default();
    for seed in seeds {
        let spec = random_spec(kind, seed, 10.0, 4.0, (160, 160), 1, 4);
        let id = format!("v{seed:03}");
        let video = render(&spec, &id).unwrap();
        let seq = FrameSequence::from_frames(video.frames, spec.fps).unwrap();
        preds.insert(id, (detect(&seq), Some(seq.duration())));
        anns.videos.push(video.annotation);
    }
    let report = evaluate(&preds, &anns, &[tau], AnnotatorMode::Max).unwrap();
    report.scores[0].f1
}

fn scene_cut_corpus() -> (bool, String) {
    let cfg = DetectConfig::default();
    let t = Instant::now();
    let f1 = single_thread(|| {
        corpus_f1(SynthKind::SceneCut, 0..50, 0.05, |seq| {
            let grid = make_grid(160, 160, 5, 5).unwrap();
            ensemble(seq, &grid, &cfg.pt, &cfg.fn_, &cfg.refine)
                .unwrap()
                .timestamps()
                .to_vec()
        })
    });
    let secs = t.elapsed().as_secs_f64();
    (
        f1 >= SCENE_CUT_MIN_F1 && secs < SCENE_CUT_BUDGET_S,
        format!(
            "50 videos, F1@0.05 = {f1:.4} (need {SCENE_CUT_MIN_F1}); {secs:.1} s single-threaded (limit {SCENE_CUT_BUDGET_S})"
        ),
    )
}

fn motion_onset_corpus() -> (bool, String) {
    let cfg = FnConfig::default();
    let refine = DetectConfig::default().refine;
    let f1 = corpus_f1(SynthKind::MotionOnset, 0..20, 0.10, |seq| {
        let grid = make_grid(160, 160, 5, 5).unwrap();
        detect_fn(seq, &grid, &cfg, Some(&refine))
            .unwrap()
            .timestamps()
            .to_vec()
    });
    let shares: Vec<f64> = (0..20)
        .map(|seed| {
            let spec = random_spec(SynthKind::MovingDot, seed, 10.0, 4.0, (160, 160), 0, 0);
            support::dot_energy_fraction(&render(&spec, "dot").unwrap(), spec.fps)
        })
        .collect();
    let worst = shares.iter().cloned().fold(1.0, f64::min);
    let held = shares.iter().filter(|&&s| s >= DOT_MIN_ENERGY).count();
    (
        f1 >= MOTION_ONSET_MIN_F1 && held == 20,
        format!(
            "20 motion-onset videos, FN F1@0.10 = {f1:.4} (need {MOTION_ONSET_MIN_F1}); \
             moving-dot localization holds for {held}/20, worst energy share {worst:.4} (need {DOT_MIN_ENERGY})"
        ),
    )
}

fn fn_analytic() -> (bool, String) {
    let uniform = PatchFlowSeries::new(0, vec![3.0; 16]);
    let exact = uniform.normalized.iter().all(|&v| v == 0.25);
    let none = uniform.boundary_indices(0.25).is_empty();
    let mut spike = vec![0.0; 16];
    spike[5] = 2.5;
    let one = PatchFlowSeries::new(0, spike).boundary_indices(0.25);
    (
        exact && none && one == [6],
        format!("uniform normalized exactly 0.25: {exact}, boundaries none: {none}; impulse boundaries {one:?}"),
    )
}

fn evaluation() -> (bool, String) {
    let dir = support::fixture_dir().join("eval");
    let report = evaluate_dataset(
        &dir.join("preds"),
        &dir.join("annotations.json"),
        &default_taus(),
        AnnotatorMode::Max,
    )
    .unwrap();
    let expected = std::fs::read_to_string(dir.join("expected_report.csv")).unwrap();
    let golden = report.to_csv() == expected;

    let mut rng = SplitMix(8);
    let list = |rng: &mut SplitMix| {
        let mut v: Vec<f64> = (0..rng.below(12))
            .map(|_| 0.05 + 19.9 * rng.unit())
            .collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let mut violations = 0;
    for _ in 0..500 {
        let (p, g) = (list(&mut rng), list(&mut rng));
        let mut last = (0, 0.0);
        for tau in default_taus() {
            let m = match_boundaries(&p, &g, 20.0, tau).len();
            let f1 = score_counts(&p, &g, 20.0, tau).f1();
            if m < last.0 || f1 < last.1 || m != match_boundaries(&g, &p, 20.0, tau).len() {
                violations += 1;
            }
            last = (m, f1);
        }
    }
    (
        golden && violations == 0,
        format!(
            "3-video fixture table {}; 500 random pairs, {violations} monotonicity/symmetry violations",
            if golden { "matches" } else { "DIFFERS" }
        ),
    )
}

fn flowgebd(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_flowgebd"));
    cmd.env_remove("FLOWGEBD_THREADS");
    if let Some(t) = threads {
        cmd.args(["--threads", t]);
    }
    let out = cmd.args(args).output().unwrap();
    assert!(
        out.status.success(),
        "flowgebd {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut compared = 0;
    let mut differing = Vec::new();
    for (kind, count, seed) in [("scene-cut", "6", "100"), ("motion-onset", "4", "200")] {
        let corpus = root.join(kind);
        let c = corpus.to_str().unwrap();
        flowgebd(
            &[
                "synth", "--kind", kind, "--count", count, "--seed", seed, "--out", c,
            ],
            None,
        );
        let manifest = corpus.join("manifest.json");
        let m = manifest.to_str().unwrap();
        let mut outputs = Vec::new();
        for threads in ["1", "8"] {
            let out = root.join(format!("{kind}_t{threads}"));
            flowgebd(
                &[
                    "detect",
                    "--batch",
                    m,
                    "--seed",
                    "42",
                    "--out",
                    out.to_str().unwrap(),
                ],
                Some(threads),
            );
            outputs.push(read_dir_sorted(&out));
        }
        compared += outputs[0].len();
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            differing.push(kind);
        }
    }
    (
        differing.is_empty(),
        format!("{compared} prediction files compared between --threads 1 and --threads 8; differing corpora {differing:?}"),
    )
}

/// Texture panning by (2, 1) px per frame, so every patch carries motion.
fn panning_video(frames: usize) -> FrameSequence {
    let big = smoothed_noise(160 + 2 * frames + 8, 160 + frames + 8, 77);
    let frames = (0..frames)
        .map(|k| LumaFrame::from_fn(160, 160, |x, y| big.get(x + 2 * k, y + k)))
        .collect();
    FrameSequence::from_frames(frames, 4.0).unwrap()
}

fn latency() -> (bool, String) {
    let seq = panning_video(40);
    let grid = make_grid(160, 160, 5, 5).unwrap();
    let cfg = DetectConfig::default();
    let best = single_thread(|| {
        (0..5)
            .map(|_| {
                let t = Instant::now();
                ensemble(&seq, &grid, &cfg.pt, &cfg.fn_, &cfg.refine).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    });
    let ms = 1000.0 * best / seq.len() as f64;
    (
        ms <= LATENCY_LIMIT_MS,
        format!(
            "{ms:.2} ms/frame on a 40-frame 160x160 panning video, 5x5 grid, 1 thread, best of 5 \
             (target {LATENCY_TARGET_MS}, fail above {LATENCY_LIMIT_MS})"
        ),
    )
}
