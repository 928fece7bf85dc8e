//! Temporal refinement of raw boundary candidates.
//!
//! Sorted candidates are grouped into chained clusters: a new cluster starts
//! only when the incoming timestamp is at least `theta3` away from every
//! member of the current one. Each cluster is replaced by its lower median,
//! so the output is always a subset of the input.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THETA3: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Cluster separation in seconds.
    pub theta3: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            theta3: DEFAULT_THETA3,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta3 > 0.0 && self.theta3.is_finite()) {
            return Err(Error::Config(format!(
                "theta3 must be positive, got {}",
                self.theta3
            )));
        }
        Ok(())
    }
}

/// Refined boundary timestamps in seconds, strictly ascending inside the video.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySet {
    timestamps: Vec<f64>,
    video_duration: f64,
}

impl BoundarySet {
    pub fn new(timestamps: Vec<f64>, video_duration: f64) -> Result<Self> {
        if let Some(w) = timestamps.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::Validation(format!(
                "boundaries not strictly ascending: {} then {}",
                w[0], w[1]
            )));
        }
        if let Some(t) = timestamps
            .iter()
            .find(|&&t| !(t > 0.0 && t < video_duration))
        {
            return Err(Error::Validation(format!(
                "boundary {t} s outside (0, {video_duration})"
            )));
        }
        Ok(Self {
            timestamps,
            video_duration,
        })
    }

    pub fn empty(video_duration: f64) -> Self {
        Self {
            timestamps: Vec::new(),
            video_duration,
        }
    }

    /// Sorted, deduplicated raw candidates without clustering.
    pub fn from_raw_union(raw: &[f64], video_duration: f64) -> Result<Self> {
        let mut v = raw.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        Self::new(v, video_duration)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn video_duration(&self) -> f64 {
        self.video_duration
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Boundary index `i` sits at the sample time of frame `i` (0-based), `i / fps`.
pub fn indices_to_timestamps(indices: &[usize], sample_fps: f64) -> Vec<f64> {
    indices.iter().map(|&i| i as f64 / sample_fps).collect()
}

/// Clusters a timestamp multiset and keeps each cluster's lower median.
pub fn refine_timestamps(raw: &[f64], theta3: f64) -> Vec<f64> {
    let mut sorted = raw.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    let mut cluster: Vec<f64> = Vec::new();
    let lower_median = |k: &[f64]| k[(k.len() - 1) / 2];
    for t in sorted {
        // sorted input: "far from every member" reduces to "far from the last"
        if let Some(&last) = cluster.last() {
            if t - last >= theta3 {
                out.push(lower_median(&cluster));
                cluster.clear();
            }
        }
        cluster.push(t);
    }
    if !cluster.is_empty() {
        out.push(lower_median(&cluster));
    }
    out.dedup();
    out
}

pub fn refine(raw: &[f64], cfg: &RefineConfig, video_duration: f64) -> Result<BoundarySet> {
    cfg.validate()?;
    if let Some(t) = raw.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Validation(format!(
            "raw boundary {t} is not a valid time"
        )));
    }
    BoundarySet::new(refine_timestamps(raw, cfg.theta3), video_duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pt,
    Fn,
    Ensemble,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Pt => "pt",
            Method::Fn => "fn",
            Method::Ensemble => "ensemble",
        })
    }
}

/// One prediction file, `<video_id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub sample_fps: f64,
    pub duration_s: f64,
    pub method: Method,
    pub boundaries_s: Vec<f64>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl Prediction {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Prediction = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        if p.boundaries_s.iter().any(|t| !t.is_finite()) {
            return Err(Error::parse(path, "non-finite boundary"));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prediction serializes") + "\n"
    }

    pub fn save(&self, dir: &Path) -> Result<std::path::PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}.json", self.video_id));
        fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
