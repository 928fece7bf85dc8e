//! Farneback two-frame dense optical flow.
//!
//! Each frame is locally approximated by a quadratic polynomial
//! `f(x) ~ x^T A x + b^T x + c` (weighted least squares with a Gaussian
//! applicability). Between two expansions the displacement `d` solves
//! `A d = -(b2 - b1) / 2`, averaged over a neighbourhood and refined
//! coarse-to-fine.

use super::plane::{build_pyramid, Plane};
use super::{FarnebackParams, FlowParams};
use crate::error::{Error, Result};
use crate::frame::LumaFrame;

/// Per-pixel displacement vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFlowField {
    pub width: usize,
    pub height: usize,
    pub vectors: Vec<[f32; 2]>,
}

impl DenseFlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vectors: vec![[0.0; 2]; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> [f32; 2] {
        self.vectors[y * self.width + x]
    }
}

/// Largest Euclidean displacement in the field.
pub fn max_flow_magnitude(field: &DenseFlowField) -> Result<f32> {
    if field.vectors.is_empty() {
        return Err(Error::Validation("empty flow field".into()));
    }
    Ok(field
        .vectors
        .iter()
        .map(|v| v[0].hypot(v[1]))
        .fold(0.0, f32::max))
}

/// Polynomial coefficients per pixel: `[b1, b2, a11, a22, a12]`, where the
/// model is `c + b1 x + b2 y + a11 x^2 + a22 y^2 + a12 x y`.
struct Expansion {
    w: usize,
    h: usize,
    coef: Vec<[f32; 5]>,
}

/// Precomputed 1-D weights and the inverse normal matrix of the fit.
struct ExpansionBasis {
    radius: isize,
    g: Vec<f64>,
    inv: [[f64; 6]; 6],
}

impl ExpansionBasis {
    fn new(poly_n: usize, sigma: f32) -> Self {
        let radius = (poly_n / 2) as isize;
        let sigma = sigma as f64;
        let g: Vec<f64> = (-radius..=radius)
            .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        // basis order: 1, x, y, x^2, y^2, xy
        let mut gram = [[0.0f64; 6]; 6];
        for (j, dy) in (-radius..=radius).enumerate() {
            for (i, dx) in (-radius..=radius).enumerate() {
                let w = g[i] * g[j];
                let (x, y) = (dx as f64, dy as f64);
                let phi = [1.0, x, y, x * x, y * y, x * y];
                for r in 0..6 {
                    for c in 0..6 {
                        gram[r][c] += w * phi[r] * phi[c];
                    }
                }
            }
        }
        Self {
            radius,
            g,
            inv: invert6(gram),
        }
    }

    fn expand(&self, img: &Plane) -> Expansion {
        let (w, h) = (img.w, img.h);
        let r = self.radius as usize;
        let taps = 2 * r + 1;
        // Row pass over an edge-replicated row: sums of g f, g x f, g x^2 f.
        let mut rows = vec![[0.0f64; 3]; w * h];
        let mut padded = vec![0.0f64; w + 2 * r];
        let dist: Vec<f64> = (0..taps).map(|k| k as f64 - r as f64).collect();
        for y in 0..h {
            let src = &img.data[y * w..][..w];
            for (i, v) in padded.iter_mut().enumerate() {
                *v = src[i.saturating_sub(r).min(w - 1)] as f64;
            }
            for (x, out) in rows[y * w..][..w].iter_mut().enumerate() {
                let mut acc = [0.0f64; 3];
                for ((&p, &g), &d) in padded[x..x + taps].iter().zip(&self.g).zip(&dist) {
                    let v = g * p;
                    acc[0] += v;
                    acc[1] += v * d;
                    acc[2] += v * d * d;
                }
                *out = acc;
            }
        }
        let mut coef = Vec::with_capacity(w * h);
        let mut m = vec![[0.0f64; 6]; w];
        for y in 0..h {
            // moments against 1, x, y, x^2, y^2, xy
            m.iter_mut().for_each(|v| *v = [0.0; 6]);
            for (k, (&gk, &d)) in self.g.iter().zip(&dist).enumerate() {
                let yy = (y + k).saturating_sub(r).min(h - 1);
                for (mv, row) in m.iter_mut().zip(&rows[yy * w..][..w]) {
                    mv[0] += gk * row[0];
                    mv[1] += gk * row[1];
                    mv[2] += gk * d * row[0];
                    mv[3] += gk * row[2];
                    mv[4] += gk * d * d * row[0];
                    mv[5] += gk * d * row[1];
                }
            }
            for mv in &m {
                let solve = |i: usize| -> f32 {
                    self.inv[i].iter().zip(mv).map(|(a, b)| a * b).sum::<f64>() as f32
                };
                coef.push([solve(1), solve(2), solve(3), solve(4), solve(5)]);
            }
        }
        Expansion { w, h, coef }
    }
}

fn invert6(mut a: [[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut inv = [[0.0f64; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        assert!(d.abs() > 1e-12, "singular polynomial basis");
        for k in 0..6 {
            a[col][k] /= d;
            inv[col][k] /= d;
        }
        for r in 0..6 {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for k in 0..6 {
                        a[r][k] -= f * a[col][k];
                        inv[r][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    inv
}

/// Confidence of expansions near the image border, indexed by distance.
const BORDER_WEIGHT: [f32; 5] = [0.14, 0.14, 0.4472, 0.4472, 0.4472];

/// Equations `G d = h` per pixel, stored as `[g11, g12, g22, h1, h2]`.
fn update_matrices(r0: &Expansion, r1: &Expansion, flow: &[[f32; 2]], out: &mut [[f32; 5]]) {
    let (w, h) = (r0.w, r0.h);
    let (xmax, ymax) = ((w - 1) as f32, (h - 1) as f32);
    for y in 0..h {
        let edge_y = y.min(h - 1 - y);
        let row = y * w..(y + 1) * w;
        let cells = out[row.clone()]
            .iter_mut()
            .zip(&r0.coef[row.clone()])
            .zip(&flow[row]);
        for (x, ((o, &c0), &[dx, dy])) in cells.enumerate() {
            let (fx, fy) = (x as f32 + dx, y as f32 + dy);
            let c1 = if fx >= 0.0 && fy >= 0.0 && fx <= xmax && fy <= ymax {
                sample_coef(r1, fx, fy)
            } else {
                // Target outside the image: only the prior displacement constrains d.
                c0
            };
            let a11 = 0.5 * (c0[2] + c1[2]);
            let a22 = 0.5 * (c0[3] + c1[3]);
            let a12 = 0.25 * (c0[4] + c1[4]);
            let b1 = 0.5 * (c0[0] - c1[0]) + a11 * dx + a12 * dy;
            let b2 = 0.5 * (c0[1] - c1[1]) + a12 * dx + a22 * dy;
            let bw = BORDER_WEIGHT
                .get(x.min(w - 1 - x).min(edge_y))
                .copied()
                .unwrap_or(1.0);
            *o = [
                bw * (a11 * a11 + a12 * a12),
                bw * (a11 + a22) * a12,
                bw * (a22 * a22 + a12 * a12),
                bw * (a11 * b1 + a12 * b2),
                bw * (a12 * b1 + a22 * b2),
            ];
        }
    }
}

/// Bilinear coefficient lookup; `x` and `y` must lie inside the image.
#[inline]
fn sample_coef(e: &Expansion, x: f32, y: f32) -> [f32; 5] {
    // truncation is floor for non-negative coordinates
    let (x0, y0) = (x as i32 as usize, y as i32 as usize);
    let x1 = (x0 + 1).min(e.w - 1);
    let y1 = (y0 + 1).min(e.h - 1);
    let (fx, fy) = (x - x0 as f32, y - y0 as f32);
    let (top, bottom) = (&e.coef[y0 * e.w..][..e.w], &e.coef[y1 * e.w..][..e.w]);
    let (c00, c01, c10, c11) = (top[x0], top[x1], bottom[x0], bottom[x1]);
    std::array::from_fn(|k| {
        let t = c00[k] + (c01[k] - c00[k]) * fx;
        let b = c10[k] + (c11[k] - c10[k]) * fx;
        t + (b - t) * fy
    })
}

/// Normalized box average of the equation channels, clipped at the borders.
/// Both passes keep running sums, so the cost does not depend on `side`; the
/// vertical pass walks rows so the channel loops stay contiguous.
struct BoxAverage {
    tmp: Vec<[f32; 5]>,
    out: Vec<[f32; 5]>,
    prefix: Vec<[f64; 5]>,
    acc: Vec<f64>,
}

/// `1 / n` for the clipped window around each of `len` positions.
fn clipped_inverse_counts(len: usize, r: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 1.0 / ((i + r).min(len - 1) - i.saturating_sub(r) + 1) as f64)
        .collect()
}

impl BoxAverage {
    fn new() -> Self {
        Self {
            tmp: Vec::new(),
            out: Vec::new(),
            prefix: Vec::new(),
            acc: Vec::new(),
        }
    }

    fn run(&mut self, src: &[[f32; 5]], w: usize, h: usize, side: usize) -> &[[f32; 5]] {
        let r = side / 2;
        let add =
            |a: [f64; 5], b: [f32; 5]| std::array::from_fn::<f64, 5, _>(|k| a[k] + b[k] as f64);
        self.tmp.resize(w * h, [0.0; 5]);
        self.out.resize(w * h, [0.0; 5]);
        self.prefix.resize(w + 1, [0.0; 5]);
        let prefix = &mut self.prefix;
        let inv_w = clipped_inverse_counts(w, r);
        for y in 0..h {
            let row = &src[y * w..][..w];
            for x in 0..w {
                prefix[x + 1] = add(prefix[x], row[x]);
            }
            let dst = &mut self.tmp[y * w..][..w];
            for (x, (d, &inv)) in dst.iter_mut().zip(&inv_w).enumerate() {
                let (lo, hi) = (x.saturating_sub(r), (x + r).min(w - 1));
                *d = std::array::from_fn(|k| ((prefix[hi + 1][k] - prefix[lo][k]) * inv) as f32);
            }
        }

        // Sliding sum over rows lo..=hi, one accumulator per channel value.
        let tmp = self.tmp.as_flattened();
        let out = self.out.as_flattened_mut();
        let n = 5 * w;
        self.acc.clear();
        self.acc.resize(n, 0.0);
        let acc = &mut self.acc;
        let (mut lo, mut hi) = (0usize, r.min(h - 1));
        for row in tmp.chunks_exact(n).take(hi + 1) {
            acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v as f64);
        }
        for y in 0..h {
            let (want_lo, want_hi) = (y.saturating_sub(r), (y + r).min(h - 1));
            while hi < want_hi {
                hi += 1;
                acc.iter_mut()
                    .zip(&tmp[hi * n..][..n])
                    .for_each(|(a, &v)| *a += v as f64);
            }
            while lo < want_lo {
                acc.iter_mut()
                    .zip(&tmp[lo * n..][..n])
                    .for_each(|(a, &v)| *a -= v as f64);
                lo += 1;
            }
            let inv = 1.0 / (hi - lo + 1) as f64;
            for (o, &a) in out[y * n..][..n].iter_mut().zip(acc.iter()) {
                *o = (a * inv) as f32;
            }
        }
        &self.out[..w * h]
    }
}

fn solve_flow(m: &[[f32; 5]], flow: &mut [[f32; 2]]) {
    for (f, e) in flow.iter_mut().zip(m) {
        let [g11, g12, g22, h1, h2] = *e;
        let det = g11 * g22 - g12 * g12;
        let idet = 1.0 / (det + 1e-3);
        *f = [(g22 * h1 - g12 * h2) * idet, (g11 * h2 - g12 * h1) * idet];
    }
}

/// Upsamples a coarse flow to `w x h`, where fine pixel `x` maps to coarse `x / 2`.
fn upsample_flow(coarse: &[[f32; 2]], cw: usize, ch: usize, w: usize, h: usize) -> Vec<[f32; 2]> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let sy = (y as f32 * 0.5).min((ch - 1) as f32);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(ch - 1);
        let fy = sy - y0 as f32;
        for x in 0..w {
            let sx = (x as f32 * 0.5).min((cw - 1) as f32);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(cw - 1);
            let fx = sx - x0 as f32;
            let mut v = [0.0f32; 2];
            for (k, item) in v.iter_mut().enumerate() {
                let top = coarse[y0 * cw + x0][k] * (1.0 - fx) + coarse[y0 * cw + x1][k] * fx;
                let bottom = coarse[y1 * cw + x0][k] * (1.0 - fx) + coarse[y1 * cw + x1][k] * fx;
                *item = 2.0 * (top * (1.0 - fy) + bottom * fy);
            }
            out.push(v);
        }
    }
    out
}

/// Per-level polynomial expansions of one frame, reusable across pairs.
pub struct FarnebackFrame {
    levels: Vec<Expansion>,
}

impl FarnebackFrame {
    pub fn new(frame: &LumaFrame, params: &FlowParams) -> Result<Self> {
        params.validate()?;
        let fb: &FarnebackParams = &params.farneback;
        if frame.width() < fb.poly_n || frame.height() < fb.poly_n {
            return Err(Error::Dimension(format!(
                "dense flow needs at least {0}x{0} pixels, got {1}x{2}",
                fb.poly_n,
                frame.width(),
                frame.height()
            )));
        }
        let basis = ExpansionBasis::new(fb.poly_n, fb.poly_sigma);
        let pyr = build_pyramid(Plane::from_luma(frame), params.pyramid_levels, fb.poly_n);
        Ok(Self {
            levels: pyr.iter().map(|p| basis.expand(p)).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.levels[0].w
    }

    pub fn height(&self) -> usize {
        self.levels[0].h
    }
}

pub fn farneback_flow(
    prev: &LumaFrame,
    next: &LumaFrame,
    params: &FlowParams,
) -> Result<DenseFlowField> {
    if !prev.same_size(next) {
        return Err(Error::Dimension(format!(
            "dense flow frames differ: {}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            next.width(),
            next.height()
        )));
    }
    let a = FarnebackFrame::new(prev, params)?;
    let b = FarnebackFrame::new(next, params)?;
    farneback_flow_frames(&a, &b, params)
}

/// Dense flow between two precomputed frames.
pub fn farneback_flow_frames(
    prev: &FarnebackFrame,
    next: &FarnebackFrame,
    params: &FlowParams,
) -> Result<DenseFlowField> {
    if prev.width() != next.width() || prev.height() != next.height() {
        return Err(Error::Dimension("dense flow frames differ in size".into()));
    }
    let fb = &params.farneback;
    let depth = prev.levels.len().min(next.levels.len());
    let mut flow: Vec<[f32; 2]> = Vec::new();
    let mut dims = (0usize, 0usize);
    let mut smoother = BoxAverage::new();
    for level in (0..depth).rev() {
        let (r0, r1) = (&prev.levels[level], &next.levels[level]);
        let (w, h) = (r0.w, r0.h);
        flow = if flow.is_empty() {
            vec![[0.0; 2]; w * h]
        } else {
            upsample_flow(&flow, dims.0, dims.1, w, h)
        };
        dims = (w, h);
        let mut m = vec![[0.0f32; 5]; w * h];
        update_matrices(r0, r1, &flow, &mut m);
        for it in 0..fb.iterations {
            let avg = smoother.run(&m, w, h, fb.smooth_window);
            solve_flow(avg, &mut flow);
            if it + 1 < fb.iterations {
                update_matrices(r0, r1, &flow, &mut m);
            }
        }
    }
    Ok(DenseFlowField {
        width: dims.0,
        height: dims.1,
        vectors: flow,
    })
}
