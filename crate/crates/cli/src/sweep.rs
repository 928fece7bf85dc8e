//! Threshold sensitivity sweep.
//!
//! Flow series and tracking candidates are computed once per video (tracking
//! once per theta1); every threshold cell then only re-thresholds and
//! re-clusters cached candidates.

use std::fmt::Write as _;
use std::str::FromStr;

use anyhow::{bail, Result};
use rayon::prelude::*;

use flowgebd_core::ensemble::DetectConfig;
use flowgebd_core::eval::{evaluate, AnnotationFile, AnnotatorMode, PredictionMap};
use flowgebd_core::fnorm::{fn_raw_timestamps, patchflow_series, PatchFlowSeries};
use flowgebd_core::grid::PatchGrid;
use flowgebd_core::pt::{pt_raw_timestamps, PtConfig};
use flowgebd_core::refine::{refine_timestamps, Method};
use flowgebd_core::FrameSequence;

/// Inclusive `start:stop:step` range, or a single value.
#[derive(Debug, Clone, PartialEq)]
pub struct Range(pub Vec<f64>);

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        let (a, b, step) = match parts[..] {
            [v] => (v, v, 1.0),
            [a, b, step] => (a, b, step),
            _ => return Err("expected start:stop:step".into()),
        };
        if !(step > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
            return Err(format!("bad range {s:?}"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // rounding keeps 0.1 + 2*0.1 printing as 0.3
        Ok(Range(
            (0..=n)
                .map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9)
                .collect(),
        ))
    }
}

struct VideoCache {
    id: String,
    duration: f64,
    pt_raw: Vec<Vec<f64>>,
    series: Vec<PatchFlowSeries>,
    fps: f64,
}

pub struct SweepPlan<'a> {
    pub theta1: &'a [f64],
    pub theta2: &'a [f64],
    pub theta3: &'a [f64],
    pub modes: &'a [Method],
    pub tau: f64,
    pub mode: AnnotatorMode,
}

fn cache_video(
    id: &str,
    seq: &FrameSequence,
    grid: &PatchGrid,
    base: &DetectConfig,
    plan: &SweepPlan,
) -> Result<VideoCache> {
    let needs_pt = plan.modes.iter().any(|m| *m != Method::Fn);
    let needs_fn = plan.modes.iter().any(|m| *m != Method::Pt);
    let pt_raw = if needs_pt {
        plan.theta1
            .iter()
            .map(|&theta1| {
                let cfg = PtConfig { theta1, ..base.pt };
                pt_raw_timestamps(seq, grid, &cfg)
            })
            .collect::<flowgebd_core::Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let series = if needs_fn {
        patchflow_series(seq, grid, &base.fn_.flow)?
    } else {
        Vec::new()
    };
    Ok(VideoCache {
        id: id.to_string(),
        duration: seq.duration(),
        pt_raw,
        series,
        fps: seq.sample_fps(),
    })
}

/// Runs the sweep over already loaded videos and returns the CSV text.
pub fn run(
    videos: &[(String, FrameSequence, PatchGrid)],
    annotations: &AnnotationFile,
    base: &DetectConfig,
    plan: &SweepPlan,
) -> Result<String> {
    for &t in plan.theta1.iter().chain(plan.theta2) {
        if !(t > 0.0 && t < 1.0) {
            bail!("theta1/theta2 values must lie in (0, 1), got {t}");
        }
    }
    if plan.theta3.iter().any(|&t| !(t > 0.0)) {
        bail!("theta3 values must be positive");
    }
    let caches: Vec<VideoCache> = videos
        .par_iter()
        .map(|(id, seq, grid)| {
            log::info!("sweep: caching {id}");
            cache_video(id, seq, grid, base, plan)
        })
        .collect::<Result<_>>()?;

    let mut csv = format!("theta1,theta2,theta3,mode,f1@{}\n", plan.tau);
    for &method in plan.modes {
        for (i1, &t1) in plan.theta1.iter().enumerate() {
            for &t2 in plan.theta2 {
                let fn_raw: Vec<Vec<f64>> = caches
                    .iter()
                    .map(|c| fn_raw_timestamps(&c.series, t2, c.fps))
                    .collect();
                for &t3 in plan.theta3 {
                    let mut preds = PredictionMap::new();
                    for (c, fr) in caches.iter().zip(&fn_raw) {
                        let raw: Vec<f64> = match method {
                            Method::Pt => c.pt_raw[i1].clone(),
                            Method::Fn => fr.clone(),
                            Method::Ensemble => c.pt_raw[i1].iter().chain(fr).copied().collect(),
                        };
                        let b: Vec<f64> = refine_timestamps(&raw, t3)
                            .into_iter()
                            .filter(|&t| t > 0.0 && t < c.duration)
                            .collect();
                        preds.insert(c.id.clone(), (b, Some(c.duration)));
                    }
                    let report = evaluate(&preds, annotations, &[plan.tau], plan.mode)?;
                    writeln!(csv, "{t1},{t2},{t3},{method},{}", report.scores[0].f1).unwrap();
                }
            }
        }
    }
    Ok(csv)
}
