//! Optical-flow and feature kernels used by both detectors.

mod corners;
mod farneback;
mod lk;
mod plane;
mod sampling;

use serde::{Deserialize, Serialize};

pub use corners::{min_eigen_scores, shi_tomasi_corners, Corner};
pub use farneback::{
    farneback_flow, farneback_flow_frames, max_flow_magnitude, DenseFlowField, FarnebackFrame,
};
pub use lk::{lk_track, lk_track_pyramids, LkPyramid, SparseFlowResult, TrackStatus, TrackedPoint};
pub use sampling::sample_uniform;

/// Sub-pixel image position, `x` along columns and `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f32,
    pub y: f32,
}

impl PixelPoint {
    pub fn new(x: f32, y: f32) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &PixelPoint) -> f32 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.x >= 0.0
            && self.y >= 0.0
            && self.x <= (width - 1) as f32
            && self.y <= (height - 1) as f32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarnebackParams {
    /// Side of the polynomial expansion neighbourhood (odd).
    pub poly_n: usize,
    /// Gaussian sigma of the expansion applicability.
    pub poly_sigma: f32,
    /// Side of the box window averaging the displacement equations (odd).
    pub smooth_window: usize,
    /// Displacement refinements per pyramid level.
    pub iterations: usize,
}

impl Default for FarnebackParams {
    fn default() -> Self {
        Self {
            poly_n: 5,
            poly_sigma: 1.1,
            smooth_window: 13,
            iterations: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Total pyramid levels including full resolution.
    pub pyramid_levels: usize,
    /// Lucas-Kanade window side (odd).
    pub window: usize,
    pub max_iters: usize,
    /// Convergence threshold on the per-iteration update, in pixels.
    pub epsilon: f32,
    /// Largest mean absolute window error (luma levels) for a tracked point.
    pub err_max: f32,
    /// Smallest normalized min-eigenvalue of the gradient matrix (luma^2/px^2).
    pub min_eigen: f32,
    pub farneback: FarnebackParams,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            window: 15,
            max_iters: 10,
            epsilon: 0.01,
            err_max: 20.0,
            min_eigen: 1e-2,
            farneback: FarnebackParams::default(),
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> crate::Result<()> {
        let fb = &self.farneback;
        let bad = |m: &str| Err(crate::Error::Config(m.to_string()));
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be >= 1");
        }
        if self.window < 3 || self.window.is_multiple_of(2) || self.window > plane::MAX_WINDOW_SIDE
        {
            return bad("LK window must be odd and in 3..=63");
        }
        if self.max_iters == 0
            || !(self.epsilon > 0.0)
            || !(self.err_max > 0.0)
            || !(self.min_eigen > 0.0)
        {
            return bad("max_iters, epsilon, err_max and min_eigen must be positive");
        }
        if fb.poly_n < 3
            || fb.poly_n.is_multiple_of(2)
            || fb.smooth_window == 0
            || fb.smooth_window.is_multiple_of(2)
        {
            return bad("poly_n and smooth_window must be odd (poly_n >= 3)");
        }
        if !(fb.poly_sigma > 0.0) || fb.iterations == 0 {
            return bad("poly_sigma and iterations must be positive");
        }
        Ok(())
    }
}
