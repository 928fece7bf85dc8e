//! Shi-Tomasi "good features to track".

use super::PixelPoint;
use crate::frame::LumaFrame;

/// A detected corner and its min-eigenvalue score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub point: PixelPoint,
    pub score: f64,
}

/// Replicate-border separable 3-tap filter along rows (`horizontal`) or columns.
fn filter3(src: &[f64], w: usize, h: usize, k: [f64; 3], horizontal: bool) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (a, b) = if horizontal {
                let l = x.saturating_sub(1);
                let r = (x + 1).min(w - 1);
                (src[y * w + l], src[y * w + r])
            } else {
                let u = y.saturating_sub(1);
                let d = (y + 1).min(h - 1);
                (src[u * w + x], src[d * w + x])
            };
            out[y * w + x] = k[0] * a + k[1] * src[y * w + x] + k[2] * b;
        }
    }
    out
}

/// Smaller eigenvalue of the 3x3-summed structure tensor (Sobel gradients,
/// replicated borders) at every pixel, row-major.
pub fn min_eigen_scores(frame: &LumaFrame) -> Vec<f64> {
    let (w, h) = (frame.width(), frame.height());
    let img: Vec<f64> = frame.data().iter().map(|&v| v as f64).collect();
    let smooth = [1.0, 2.0, 1.0];
    let diff = [-1.0, 0.0, 1.0];
    let gx = filter3(&filter3(&img, w, h, diff, true), w, h, smooth, false);
    let gy = filter3(&filter3(&img, w, h, smooth, true), w, h, diff, false);
    let boxed = |v: Vec<f64>| {
        let ones = [1.0, 1.0, 1.0];
        filter3(&filter3(&v, w, h, ones, true), w, h, ones, false)
    };
    let sxx = boxed(gx.iter().map(|g| g * g).collect());
    let syy = boxed(gy.iter().map(|g| g * g).collect());
    let sxy = boxed(gx.iter().zip(&gy).map(|(a, b)| a * b).collect());
    (0..w * h)
        .map(|i| {
            let half_trace = 0.5 * (sxx[i] + syy[i]);
            let half_diff = 0.5 * (sxx[i] - syy[i]);
            (half_trace - half_diff.hypot(sxy[i])).max(0.0)
        })
        .collect()
}

/// Strongest corners, strongest first, at least `min_distance` apart.
///
/// Candidates must be 3x3 local maxima of the score map and reach
/// `quality_level` times the best score. A flat image yields no corners.
pub fn shi_tomasi_corners(
    frame: &LumaFrame,
    max_count: usize,
    quality_level: f64,
    min_distance: f32,
) -> Vec<Corner> {
    let (w, h) = (frame.width(), frame.height());
    if w < 3 || h < 3 || max_count == 0 {
        return Vec::new();
    }
    let scores = min_eigen_scores(frame);
    let best = scores.iter().cloned().fold(0.0, f64::max);
    if best <= 0.0 {
        return Vec::new();
    }
    let threshold = quality_level * best;
    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let s = scores[y * w + x];
            if s < threshold || s <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if scores[ny * w + nx] > s {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((s, y * w + x));
            }
        }
    }
    // descending score, ties in raster order
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut picked: Vec<Corner> = Vec::new();
    for (score, idx) in candidates {
        let point = PixelPoint::new((idx % w) as f32, (idx / w) as f32);
        if picked
            .iter()
            .all(|c| c.point.distance(&point) >= min_distance)
        {
            picked.push(Corner { point, score });
            if picked.len() == max_count {
                break;
            }
        }
    }
    picked
}
