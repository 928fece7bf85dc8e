//! Flow Normalization boundary detection.
//!
//! For every patch, the maximum dense-flow magnitude of each frame
//! transition forms a series. The series is L2-normalized and transitions
//! whose normalized value exceeds `theta2` become boundary candidates at the
//! later frame of the transition.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameSequence;
use crate::grid::{extract_patch, PatchGrid};
use crate::kernels::{farneback_flow_frames, max_flow_magnitude, FarnebackFrame, FlowParams};
use crate::refine::{indices_to_timestamps, refine, BoundarySet, RefineConfig};

pub const DEFAULT_THETA2: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnConfig {
    pub theta2: f64,
    pub flow: FlowParams,
}

impl Default for FnConfig {
    fn default() -> Self {
        Self {
            theta2: DEFAULT_THETA2,
            flow: FlowParams::default(),
        }
    }
}

impl FnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta2 > 0.0 && self.theta2 < 1.0) {
            return Err(Error::Config(format!(
                "theta2 must be in (0, 1), got {}",
                self.theta2
            )));
        }
        self.flow.validate()
    }
}

/// Max-magnitude series of one patch; entry `j` is the transition `j -> j+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFlowSeries {
    pub patch_index: usize,
    pub values: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl PatchFlowSeries {
    pub fn new(patch_index: usize, values: Vec<f64>) -> Self {
        let normalized = normalize_l2(&values);
        Self {
            patch_index,
            values,
            normalized,
        }
    }

    /// Boundary frame indices whose normalized value is strictly above `theta2`.
    pub fn boundary_indices(&self, theta2: f64) -> Vec<usize> {
        threshold_series(&self.normalized, theta2)
    }
}

/// Divides by the Euclidean norm. An all-zero series stays all zero.
pub fn normalize_l2(values: &[f64]) -> Vec<f64> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| v / norm).collect()
}

pub fn threshold_series(normalized: &[f64], theta2: f64) -> Vec<usize> {
    normalized
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > theta2)
        .map(|(j, _)| j + 1)
        .collect()
}

/// Computes every patch series; patches run in parallel, output is in patch order.
pub fn patchflow_series(
    seq: &FrameSequence,
    grid: &PatchGrid,
    flow: &FlowParams,
) -> Result<Vec<PatchFlowSeries>> {
    flow.validate()?;
    seq.require_detectable()?;
    let (w, h) = seq.dimensions().unwrap();
    if !grid.fits(w, h) {
        return Err(Error::Config(format!("grid does not fit {w}x{h} frames")));
    }
    grid.patches()
        .par_iter()
        .map(|rect| {
            let expanded = seq
                .frames()
                .iter()
                .map(|f| FarnebackFrame::new(&extract_patch(f, rect)?, flow))
                .collect::<Result<Vec<_>>>()?;
            let values = expanded
                .windows(2)
                .map(|p| {
                    let field = farneback_flow_frames(&p[0], &p[1], flow)?;
                    Ok(max_flow_magnitude(&field)? as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PatchFlowSeries::new(rect.index, values))
        })
        .collect()
}

/// Candidate timestamps from precomputed series, sorted, with multiplicity.
pub fn fn_raw_timestamps(series: &[PatchFlowSeries], theta2: f64, sample_fps: f64) -> Vec<f64> {
    let all: Vec<usize> = series
        .iter()
        .flat_map(|s| s.boundary_indices(theta2))
        .collect();
    let mut t = indices_to_timestamps(&all, sample_fps);
    t.sort_by(f64::total_cmp);
    t
}

pub fn detect_fn_raw(seq: &FrameSequence, grid: &PatchGrid, cfg: &FnConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let series = patchflow_series(seq, grid, &cfg.flow)?;
    Ok(fn_raw_timestamps(&series, cfg.theta2, seq.sample_fps()))
}

/// Patchwise flow normalization. With `refine` the union is clustered,
/// otherwise the deduplicated union is returned.
pub fn detect_fn(
    seq: &FrameSequence,
    grid: &PatchGrid,
    cfg: &FnConfig,
    refine_cfg: Option<&RefineConfig>,
) -> Result<BoundarySet> {
    let raw = detect_fn_raw(seq, grid, cfg)?;
    match refine_cfg {
        Some(r) => refine(&raw, r, seq.duration()),
        None => BoundarySet::from_raw_union(&raw, seq.duration()),
    }
}

/// CSV dump, one row per patch and transition.
pub fn write_series_csv(series: &[PatchFlowSeries], path: &Path) -> Result<()> {
    let mut out = String::from("patch_index,t_index,value,normalized\n");
    for s in series {
        for (j, (v, n)) in s.values.iter().zip(&s.normalized).enumerate() {
            out.push_str(&format!("{},{},{},{}\n", s.patch_index, j + 1, v, n));
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::LumaFrame;
    use crate::grid::make_grid;
    use proptest::prelude::*;

    #[test]
    fn impulse_series() {
        let mut v = vec![0.0; 20];
        v[7] = 3.5;
        let s = PatchFlowSeries::new(0, v);
        assert_eq!(s.normalized[7], 1.0);
        assert_eq!(s.boundary_indices(0.25), vec![8]);
    }

    #[test]
    fn uniform_series_sits_on_threshold() {
        for v in [1.0, 2.0, 3.0, 0.5] {
            let s = PatchFlowSeries::new(0, vec![v; 16]);
            assert!(s.normalized.iter().all(|&n| n == 0.25));
            assert!(s.boundary_indices(0.25).is_empty());
        }
    }

    #[test]
    fn zero_series_has_no_boundaries() {
        let s = PatchFlowSeries::new(0, vec![0.0; 9]);
        assert!(s.normalized.iter().all(|&n| n == 0.0));
        assert!(s.boundary_indices(0.25).is_empty());
        assert!(normalize_l2(&[]).is_empty());
    }

    #[test]
    fn static_video_gives_zero_series() {
        let f = LumaFrame::from_fn(32, 32, |x, y| ((x * 7 + y * 3) % 256) as u8);
        let seq = FrameSequence::from_frames(vec![f; 5], 4.0).unwrap();
        let grid = make_grid(32, 32, 2, 2).unwrap();
        let series = patchflow_series(&seq, &grid, &FlowParams::default()).unwrap();
        assert_eq!(series.len(), 5);
        for s in &series {
            assert_eq!(s.values.len(), 4);
            assert!(s.values.iter().all(|&v| v < 0.05), "{:?}", s.values);
        }
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        write_series_csv(&[PatchFlowSeries::new(3, vec![0.0, 2.0])], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "patch_index,t_index,value,normalized\n3,1,0,0\n3,2,2,1\n"
        );
    }

    proptest! {
        #[test]
        fn normalized_series_has_unit_norm(v in proptest::collection::vec(0.0f64..50.0, 1..64)) {
            let n = normalize_l2(&v);
            let norm: f64 = n.iter().map(|x| x * x).sum::<f64>().sqrt();
            if v.iter().any(|&x| x > 0.0) {
                prop_assert!((norm - 1.0).abs() < 1e-9);
            } else {
                prop_assert_eq!(norm, 0.0);
            }
            // at most 1/theta2^2 values can exceed theta2
            prop_assert!(threshold_series(&n, 0.25).len() <= 16);
        }
    }
}
