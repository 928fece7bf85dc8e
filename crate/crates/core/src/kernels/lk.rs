//! Pyramidal iterative Lucas-Kanade sparse tracking (Bouguet's scheme).
//!
//! The template gradients and the 2x2 gradient matrix are computed once per
//! level from the previous frame; each iteration only resamples the next
//! frame at the current displacement estimate.

use super::plane::{build_pyramid, PaddedPlane, Plane, WindowShape};
use super::{FlowParams, PixelPoint};
use crate::error::{Error, Result};
use crate::frame::LumaFrame;
use wide::f32x8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tracked,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    pub origin: PixelPoint,
    pub position: PixelPoint,
    pub displacement: [f32; 2],
    pub status: TrackStatus,
    /// Mean absolute window difference after alignment, in luma levels.
    pub residual: f32,
}

impl TrackedPoint {
    pub fn is_tracked(&self) -> bool {
        self.status == TrackStatus::Tracked
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFlowResult {
    pub points: Vec<TrackedPoint>,
}

impl SparseFlowResult {
    pub fn tracked_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_tracked()).count()
    }
}

struct Level {
    img: PaddedPlane,
    gx: PaddedPlane,
    gy: PaddedPlane,
}

/// Image pyramid with per-level gradients, reusable across frame pairs.
pub struct LkPyramid {
    levels: Vec<Level>,
}

impl LkPyramid {
    /// Pyramid padded for the default window size.
    pub fn new(frame: &LumaFrame, levels: usize) -> Self {
        Self::with_window(frame, levels, FlowParams::default().window)
    }

    /// Pyramid padded so every window of side `window` whose centre lies
    /// within half a window of the image reads contiguous memory.
    pub fn with_window(frame: &LumaFrame, levels: usize, window: usize) -> Self {
        let pad = WindowShape::new(window).pad();
        let planes = build_pyramid(Plane::from_luma(frame), levels, 4);
        Self {
            levels: planes
                .into_iter()
                .map(|img| {
                    let (gx, gy) = img.gradients();
                    Level {
                        img: PaddedPlane::new(&img, pad),
                        gx: PaddedPlane::new(&gx, pad),
                        gy: PaddedPlane::new(&gy, pad),
                    }
                })
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.levels[0].img.w
    }

    pub fn height(&self) -> usize {
        self.levels[0].img.h
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}

pub fn lk_track(
    prev: &LumaFrame,
    next: &LumaFrame,
    points: &[PixelPoint],
    params: &FlowParams,
) -> Result<SparseFlowResult> {
    if !prev.same_size(next) {
        return Err(Error::Dimension(format!(
            "LK frames differ: {}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            next.width(),
            next.height()
        )));
    }
    params.validate()?;
    let a = LkPyramid::with_window(prev, params.pyramid_levels, params.window);
    let b = LkPyramid::with_window(next, params.pyramid_levels, params.window);
    lk_track_pyramids(&a, &b, points, params)
}

pub fn lk_track_pyramids(
    prev: &LkPyramid,
    next: &LkPyramid,
    points: &[PixelPoint],
    params: &FlowParams,
) -> Result<SparseFlowResult> {
    if prev.width() != next.width() || prev.height() != next.height() {
        return Err(Error::Dimension("LK pyramids differ in size".into()));
    }
    let depth = prev.depth().min(next.depth()).min(params.pyramid_levels);
    let points = track_all(prev, next, points, depth, params);
    Ok(SparseFlowResult { points })
}

fn track_all(
    prev: &LkPyramid,
    next: &LkPyramid,
    points: &[PixelPoint],
    depth: usize,
    params: &FlowParams,
) -> Vec<TrackedPoint> {
    let mut window = Window::new(params.window);
    let mut out = Vec::with_capacity(points.len());
    for &p in points {
        out.push(track_point(prev, next, p, depth, params, &mut window));
    }
    out
}

/// Scratch buffers for one integration window.
struct Window {
    shape: WindowShape,
    tmpl: Vec<f32>,
    ix: Vec<f32>,
    iy: Vec<f32>,
    warped: Vec<f32>,
    scratch: Vec<f32>,
}

impl Window {
    fn new(side: usize) -> Self {
        let shape = WindowShape::new(side);
        let n = shape.len();
        Self {
            shape,
            tmpl: vec![0.0; n],
            ix: vec![0.0; n],
            iy: vec![0.0; n],
            warped: vec![0.0; n],
            scratch: vec![0.0; n + shape.cols],
        }
    }

    /// Zeroes the row padding so it drops out of every sum.
    fn clear_padding(shape: WindowShape, buf: &mut [f32]) {
        for row in buf.chunks_exact_mut(shape.cols) {
            row[shape.side..].fill(0.0);
        }
    }
}

const LANES: usize = 8;

// Window rows are padded to a multiple of LANES. The sums accumulate lane
// by lane and fold in a fixed order, so results do not depend on the vector
// width the target provides.

fn lanes(s: &[f32]) -> f32x8 {
    f32x8::new(s.try_into().unwrap())
}

fn fold_lanes(acc: f32x8) -> f32 {
    acc.to_array().iter().sum()
}

/// `[sum ix^2, sum ix iy, sum iy^2]`.
fn structure_sums(ix: &[f32], iy: &[f32]) -> [f32; 3] {
    debug_assert!(ix.len().is_multiple_of(LANES));
    let (mut xx, mut xy, mut yy) = (f32x8::ZERO, f32x8::ZERO, f32x8::ZERO);
    for (a, b) in ix.chunks_exact(LANES).zip(iy.chunks_exact(LANES)) {
        let (a, b) = (lanes(a), lanes(b));
        xx += a * a;
        xy += a * b;
        yy += b * b;
    }
    [fold_lanes(xx), fold_lanes(xy), fold_lanes(yy)]
}

/// `[sum (t - w) ix, sum (t - w) iy]`.
fn mismatch_sums(tmpl: &[f32], warped: &[f32], ix: &[f32], iy: &[f32]) -> [f32; 2] {
    debug_assert!(tmpl.len().is_multiple_of(LANES));
    let (mut bx, mut by) = (f32x8::ZERO, f32x8::ZERO);
    let chunks = tmpl
        .chunks_exact(LANES)
        .zip(warped.chunks_exact(LANES))
        .zip(ix.chunks_exact(LANES).zip(iy.chunks_exact(LANES)));
    for ((t, w), (gx, gy)) in chunks {
        let d = lanes(t) - lanes(w);
        bx += d * lanes(gx);
        by += d * lanes(gy);
    }
    [fold_lanes(bx), fold_lanes(by)]
}

fn abs_diff_sum(a: &[f32], b: &[f32]) -> f32 {
    debug_assert!(a.len().is_multiple_of(LANES));
    let mut acc = f32x8::ZERO;
    for (x, y) in a.chunks_exact(LANES).zip(b.chunks_exact(LANES)) {
        acc += (lanes(x) - lanes(y)).abs();
    }
    fold_lanes(acc)
}

enum LevelOutcome {
    Converged,
    NotConverged,
    Singular,
}

fn track_point(
    prev: &LkPyramid,
    next: &LkPyramid,
    origin: PixelPoint,
    depth: usize,
    params: &FlowParams,
    win: &mut Window,
) -> TrackedPoint {
    let lost = |d: [f32; 2]| TrackedPoint {
        origin,
        position: PixelPoint::new(origin.x + d[0], origin.y + d[1]),
        displacement: d,
        status: TrackStatus::Lost,
        residual: f32::INFINITY,
    };
    let shape = win.shape;
    let n = (shape.side * shape.side) as f32;
    let mut guess = [0.0f32; 2];
    let mut outcome = LevelOutcome::Converged;
    for level in (0..depth).rev() {
        let scale = 1.0 / (1u32 << level) as f32;
        let (px, py) = (origin.x * scale, origin.y * scale);
        let src = &prev.levels[level];
        let dst = &next.levels[level].img;

        src.img
            .sample_window(px, py, shape, &mut win.tmpl, &mut win.scratch);
        src.gx
            .sample_window(px, py, shape, &mut win.ix, &mut win.scratch);
        src.gy
            .sample_window(px, py, shape, &mut win.iy, &mut win.scratch);
        Window::clear_padding(shape, &mut win.ix);
        Window::clear_padding(shape, &mut win.iy);
        let [gxx, gxy, gyy] = structure_sums(&win.ix, &win.iy);
        let det = gxx * gyy - gxy * gxy;
        let min_eig = 0.5 * (gxx + gyy - ((gxx - gyy).powi(2) + 4.0 * gxy * gxy).sqrt()) / n;
        if min_eig < params.min_eigen || det.abs() < f32::EPSILON {
            if level == 0 {
                return lost(guess);
            }
            outcome = LevelOutcome::Singular;
            guess = [guess[0] * 2.0, guess[1] * 2.0];
            continue;
        }
        let inv = 1.0 / det;

        let mut v = [0.0f32; 2];
        outcome = LevelOutcome::NotConverged;
        for _ in 0..params.max_iters {
            let (cx, cy) = (px + guess[0] + v[0], py + guess[1] + v[1]);
            // A window centered far outside the image carries no information.
            let margin = shape.half as f32;
            if !(cx.is_finite() && cy.is_finite())
                || cx < -margin
                || cy < -margin
                || cx > (dst.w - 1) as f32 + margin
                || cy > (dst.h - 1) as f32 + margin
            {
                return lost([(guess[0] + v[0]) / scale, (guess[1] + v[1]) / scale]);
            }
            dst.sample_window(cx, cy, shape, &mut win.warped, &mut win.scratch);
            let [bx, by] = mismatch_sums(&win.tmpl, &win.warped, &win.ix, &win.iy);
            let dx = inv * (gyy * bx - gxy * by);
            let dy = inv * (gxx * by - gxy * bx);
            v[0] += dx;
            v[1] += dy;
            if dx * dx + dy * dy < params.epsilon * params.epsilon {
                outcome = LevelOutcome::Converged;
                break;
            }
        }
        guess = [guess[0] + v[0], guess[1] + v[1]];
        if level > 0 {
            guess = [guess[0] * 2.0, guess[1] * 2.0];
        }
    }
    if !matches!(outcome, LevelOutcome::Converged) {
        return lost(guess);
    }

    let base = &prev.levels[0];
    let dst = &next.levels[0].img;
    let position = PixelPoint::new(origin.x + guess[0], origin.y + guess[1]);
    if !position.inside(dst.w, dst.h) {
        return lost(guess);
    }
    base.img
        .sample_window(origin.x, origin.y, shape, &mut win.tmpl, &mut win.scratch);
    dst.sample_window(
        position.x,
        position.y,
        shape,
        &mut win.warped,
        &mut win.scratch,
    );
    Window::clear_padding(shape, &mut win.tmpl);
    Window::clear_padding(shape, &mut win.warped);
    let err = abs_diff_sum(&win.tmpl, &win.warped);
    let residual = err / n;
    TrackedPoint {
        origin,
        position,
        displacement: guess,
        status: if residual <= params.err_max {
            TrackStatus::Tracked
        } else {
            TrackStatus::Lost
        },
        residual,
    }
}
