//! Pixel Tracking boundary detection.
//!
//! Key pixels sampled on a reference frame are tracked frame to frame with
//! sparse flow. When the surviving fraction of the reference set drops below
//! `theta1`, the current frame is a boundary candidate and a fresh reference
//! set is sampled on it. Each patch of the grid runs its own causal stream.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FrameSequence, LumaFrame};
use crate::grid::{extract_patch, PatchGrid, PatchRect};
use crate::kernels::{
    lk_track_pyramids, sample_uniform, shi_tomasi_corners, FlowParams, LkPyramid, PixelPoint,
    TrackedPoint,
};
use crate::mix_seed;
use crate::refine::{indices_to_timestamps, refine, BoundarySet, RefineConfig};

pub const DEFAULT_THETA1: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    #[default]
    UniformRandom,
    ShiTomasi,
}

/// Which tracked points count as still present in the next frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurvivalRule {
    /// The tracker converged with an acceptable residual inside the region.
    #[default]
    Tracked,
    /// Literal rule: any non-zero displacement, whatever the tracker status.
    NonZeroDisplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtConfig {
    pub theta1: f64,
    pub sampler: Sampler,
    pub sample_fraction: f64,
    pub sample_cap: usize,
    pub survival: SurvivalRule,
    pub flow: FlowParams,
    pub seed: u64,
}

impl Default for PtConfig {
    fn default() -> Self {
        Self {
            theta1: DEFAULT_THETA1,
            sampler: Sampler::UniformRandom,
            sample_fraction: 0.05,
            sample_cap: 400,
            survival: SurvivalRule::Tracked,
            flow: FlowParams::default(),
            seed: 0,
        }
    }
}

impl PtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta1 > 0.0 && self.theta1 < 1.0) {
            return Err(Error::Config(format!(
                "theta1 must be in (0, 1), got {}",
                self.theta1
            )));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) || self.sample_cap == 0 {
            return Err(Error::Config(
                "sample fraction must be in (0, 1] and cap positive".into(),
            ));
        }
        self.flow.validate()
    }
}

/// Survival measurement at one frame of a stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    /// 0-based frame index.
    pub index: usize,
    /// Survivors over reference-set size before any resampling.
    pub measured: f64,
    /// Ratio carried into the next frame (1 after a resample).
    pub carried: f64,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PtStream {
    /// Boundary frame indices, ascending, each in `1..L`.
    pub boundaries: Vec<usize>,
    pub trace: Vec<TraceStep>,
}

fn sample_points(frame: &LumaFrame, cfg: &PtConfig, seed: u64) -> Result<Vec<PixelPoint>> {
    let (w, h) = (frame.width(), frame.height());
    let region = PatchRect::full(w, h);
    if cfg.sampler == Sampler::ShiTomasi {
        let budget = ((cfg.sample_fraction * region.area() as f64) - 1e-9)
            .ceil()
            .max(1.0) as usize;
        let corners = shi_tomasi_corners(frame, budget.min(cfg.sample_cap), 0.01, 3.0);
        if !corners.is_empty() {
            return Ok(corners.into_iter().map(|c| c.point).collect());
        }
    }
    sample_uniform(w, h, &region, cfg.sample_fraction, cfg.sample_cap, seed)
}

fn survives(p: &TrackedPoint, rule: SurvivalRule, w: usize, h: usize) -> bool {
    match rule {
        SurvivalRule::Tracked => p.is_tracked() && p.position.inside(w, h),
        SurvivalRule::NonZeroDisplacement => {
            let [dx, dy] = p.displacement;
            (dx != 0.0 || dy != 0.0) && dx.is_finite() && dy.is_finite() && p.position.inside(w, h)
        }
    }
}

/// Runs one causal tracking stream over the pixels of `region`.
pub fn detect_pt_stream(
    seq: &FrameSequence,
    region: &PatchRect,
    cfg: &PtConfig,
) -> Result<PtStream> {
    cfg.validate()?;
    seq.require_detectable()?;
    let patches = seq
        .frames()
        .iter()
        .map(|f| extract_patch(f, region))
        .collect::<Result<Vec<_>>>()?;
    track_patches(&patches, cfg, mix_seed(cfg.seed, region.index as u64))
}

fn track_patches(frames: &[LumaFrame], cfg: &PtConfig, stream_seed: u64) -> Result<PtStream> {
    let (w, h) = (frames[0].width(), frames[0].height());
    let levels = cfg.flow.pyramid_levels;
    let mut resamples = 0u64;
    let mut base = sample_points(&frames[0], cfg, mix_seed(stream_seed, resamples))?;
    let mut out = PtStream::default();
    if base.is_empty() {
        return Ok(out);
    }
    let mut base_count = base.len();
    let mut prev = LkPyramid::with_window(&frames[0], levels, cfg.flow.window);
    for (i, frame) in frames.iter().enumerate().skip(1) {
        let next = LkPyramid::with_window(frame, levels, cfg.flow.window);
        let tracked = lk_track_pyramids(&prev, &next, &base, &cfg.flow)?;
        let survivors: Vec<PixelPoint> = tracked
            .points
            .iter()
            .filter(|p| survives(p, cfg.survival, w, h))
            .map(|p| p.position)
            .collect();
        let ratio = survivors.len() as f64 / base_count as f64;
        let boundary = ratio < cfg.theta1;
        if boundary {
            out.boundaries.push(i);
            resamples += 1;
            base = sample_points(frame, cfg, mix_seed(stream_seed, resamples))?;
            base_count = base.len();
        } else {
            base = survivors;
        }
        out.trace.push(TraceStep {
            index: i,
            measured: ratio,
            carried: if boundary { 1.0 } else { ratio },
            boundary,
        });
        if base_count == 0 {
            break;
        }
        prev = next;
    }
    Ok(out)
}

/// Boundary indices of every patch stream, in patch order.
pub fn detect_pt_raw(
    seq: &FrameSequence,
    grid: &PatchGrid,
    cfg: &PtConfig,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    seq.require_detectable()?;
    let (w, h) = seq.dimensions().unwrap();
    if !grid.fits(w, h) {
        return Err(Error::Config(format!("grid does not fit {w}x{h} frames")));
    }
    grid.patches()
        .par_iter()
        .map(|rect| detect_pt_stream(seq, rect, cfg).map(|s| s.boundaries))
        .collect()
}

/// Union of all patch candidates as a sorted timestamp multiset.
pub fn pt_raw_timestamps(
    seq: &FrameSequence,
    grid: &PatchGrid,
    cfg: &PtConfig,
) -> Result<Vec<f64>> {
    let all: Vec<usize> = detect_pt_raw(seq, grid, cfg)?
        .into_iter()
        .flatten()
        .collect();
    let mut t = indices_to_timestamps(&all, seq.sample_fps());
    t.sort_by(f64::total_cmp);
    Ok(t)
}

/// Patchwise pixel tracking. With `refine` the union is clustered,
/// otherwise the deduplicated union is returned.
pub fn detect_pt(
    seq: &FrameSequence,
    grid: &PatchGrid,
    cfg: &PtConfig,
    refine_cfg: Option<&RefineConfig>,
) -> Result<BoundarySet> {
    let raw = pt_raw_timestamps(seq, grid, cfg)?;
    match refine_cfg {
        Some(r) => refine(&raw, r, seq.duration()),
        None => BoundarySet::from_raw_union(&raw, seq.duration()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::synth::smoothed_noise;

    fn cut_video(cut: usize, len: usize) -> FrameSequence {
        let a = smoothed_noise(64, 64, 1);
        let b = smoothed_noise(64, 64, 2);
        let frames = (0..len)
            .map(|k| if k < cut { a.clone() } else { b.clone() })
            .collect();
        FrameSequence::from_frames(frames, 4.0).unwrap()
    }

    #[test]
    fn single_cut_is_found_once() {
        let seq = cut_video(20, 40);
        let s = detect_pt_stream(&seq, &PatchRect::full(64, 64), &PtConfig::default()).unwrap();
        assert_eq!(s.boundaries, vec![20]);
        let below: Vec<usize> = s
            .trace
            .iter()
            .filter(|t| t.measured < 0.4)
            .map(|t| t.index)
            .collect();
        assert_eq!(below, vec![20]);
        let at_cut = s.trace.iter().find(|t| t.index == 20).unwrap();
        assert_eq!(at_cut.carried, 1.0);
        assert!(s
            .trace
            .iter()
            .filter(|t| t.index != 20)
            .all(|t| t.measured == 1.0));
    }

    #[test]
    fn static_video_has_no_boundaries() {
        let seq = cut_video(100, 12);
        let grid = make_grid(64, 64, 2, 2).unwrap();
        assert!(detect_pt(&seq, &grid, &PtConfig::default(), None)
            .unwrap()
            .is_empty());
        let two = cut_video(100, 2);
        assert!(detect_pt(&two, &grid, &PtConfig::default(), None)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn literal_rule_fires_on_static_frames() {
        let seq = cut_video(100, 4);
        let cfg = PtConfig {
            survival: SurvivalRule::NonZeroDisplacement,
            ..PtConfig::default()
        };
        let s = detect_pt_stream(&seq, &PatchRect::full(64, 64), &cfg).unwrap();
        assert_eq!(s.boundaries, vec![1, 2, 3]);
    }

    #[test]
    fn framewise_equals_one_by_one_grid() {
        let seq = cut_video(7, 16);
        let grid = make_grid(64, 64, 1, 1).unwrap();
        let raw = detect_pt_raw(&seq, &grid, &PtConfig::default()).unwrap();
        let direct =
            detect_pt_stream(&seq, &PatchRect::full(64, 64), &PtConfig::default()).unwrap();
        assert_eq!(raw, vec![direct.boundaries]);
    }

    #[test]
    fn causal_prefix() {
        let seq = cut_video(9, 24);
        let cfg = PtConfig::default();
        let full = detect_pt_stream(&seq, &PatchRect::full(64, 64), &cfg).unwrap();
        for k in [2, 9, 10, 17] {
            let part =
                detect_pt_stream(&seq.prefix(k).unwrap(), &PatchRect::full(64, 64), &cfg).unwrap();
            let expect: Vec<usize> = full.boundaries.iter().copied().filter(|&i| i < k).collect();
            assert_eq!(part.boundaries, expect);
        }
    }

    #[test]
    fn shi_tomasi_falls_back_on_flat_frames() {
        let flat = LumaFrame::filled(32, 32, 50);
        let seq = FrameSequence::from_frames(vec![flat; 3], 4.0).unwrap();
        let cfg = PtConfig {
            sampler: Sampler::ShiTomasi,
            ..PtConfig::default()
        };
        // uniform fallback points on a flat frame cannot be tracked
        let s = detect_pt_stream(&seq, &PatchRect::full(32, 32), &cfg).unwrap();
        assert_eq!(s.boundaries, vec![1, 2]);
    }

    #[test]
    fn rejects_bad_theta() {
        let cfg = PtConfig {
            theta1: 1.0,
            ..PtConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
