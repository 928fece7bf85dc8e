//! Ensemble of both detectors and a single entry point per method.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fnorm::{detect_fn, detect_fn_raw, FnConfig};
use crate::frame::FrameSequence;
use crate::grid::PatchGrid;
use crate::pt::{detect_pt, pt_raw_timestamps, PtConfig};
use crate::refine::{refine, BoundarySet, Method, Prediction, RefineConfig};

/// Union of the raw PT and FN candidate multisets, refined once.
pub fn ensemble(
    seq: &FrameSequence,
    grid: &PatchGrid,
    pt_cfg: &PtConfig,
    fn_cfg: &FnConfig,
    refine_cfg: &RefineConfig,
) -> Result<BoundarySet> {
    let (pt, fnr) = rayon::join(
        || pt_raw_timestamps(seq, grid, pt_cfg),
        || detect_fn_raw(seq, grid, fn_cfg),
    );
    let mut raw = pt?;
    raw.extend(fnr?);
    refine(&raw, refine_cfg, seq.duration())
}

/// Every knob that influences a detection run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DetectConfig {
    pub pt: PtConfig,
    #[serde(rename = "fn")]
    pub fn_: FnConfig,
    pub refine: RefineConfig,
    /// Skip clustering for single-detector methods.
    pub raw: bool,
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        self.pt.validate()?;
        self.fn_.validate()?;
        self.refine.validate()
    }
}

pub fn detect(
    seq: &FrameSequence,
    grid: &PatchGrid,
    method: Method,
    cfg: &DetectConfig,
) -> Result<BoundarySet> {
    cfg.validate()?;
    let r = (!cfg.raw).then_some(&cfg.refine);
    match method {
        Method::Pt => detect_pt(seq, grid, &cfg.pt, r),
        Method::Fn => detect_fn(seq, grid, &cfg.fn_, r),
        Method::Ensemble => ensemble(seq, grid, &cfg.pt, &cfg.fn_, &cfg.refine),
    }
}

/// Runs `method` and packages the result with a config echo.
pub fn predict(
    video_id: &str,
    seq: &FrameSequence,
    grid: &PatchGrid,
    method: Method,
    cfg: &DetectConfig,
) -> Result<Prediction> {
    let set = detect(seq, grid, method, cfg)?;
    let mut echo = serde_json::to_value(cfg).expect("config serializes");
    echo["grid"] = serde_json::json!({ "n_w": grid.n_w(), "n_h": grid.n_h() });
    Ok(Prediction {
        video_id: video_id.to_string(),
        sample_fps: seq.sample_fps(),
        duration_s: seq.duration(),
        method,
        boundaries_s: set.timestamps().to_vec(),
        config: echo,
    })
}
