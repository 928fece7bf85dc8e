use crate::frame::LumaFrame;

/// Largest supported integration window side.
pub(crate) const MAX_WINDOW_SIDE: usize = 63;
const MAX_WINDOW_COLS: usize = 64;

/// Geometry of a square integration window whose rows are stored padded to
/// a multiple of 8 values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct WindowShape {
    pub half: usize,
    pub side: usize,
    pub cols: usize,
}

impl WindowShape {
    pub fn new(side: usize) -> Self {
        assert!(side % 2 == 1 && side <= MAX_WINDOW_SIDE);
        Self {
            half: side / 2,
            side,
            cols: side.div_ceil(8) * 8,
        }
    }

    pub fn len(&self) -> usize {
        self.side * self.cols
    }

    /// Border a [`PaddedPlane`] needs so in-range windows take the fast path.
    pub fn pad(&self) -> usize {
        self.cols + 1
    }
}

/// Clamped `(i0, i1, frac)` taps along one axis for offsets `-half..=half`.
fn window_taps(c: f32, half: isize, n: usize, out: &mut [(usize, usize, f32)]) {
    let c = if c.is_finite() { c } else { 0.0 };
    let f0 = c.floor();
    let frac = c - f0;
    let base = f0 as isize - half;
    let last = n as isize - 1;
    for (k, t) in out.iter_mut().enumerate() {
        let i = base + k as isize;
        *t = if i < 0 {
            (0, 0, 0.0)
        } else if i >= last {
            (n - 1, n - 1, 0.0)
        } else {
            (i as usize, i as usize + 1, frac)
        };
    }
}

/// Single-channel float image used inside the kernels.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn zeros(w: usize, h: usize) -> Self {
        Self {
            w,
            h,
            data: vec![0.0; w * h],
        }
    }

    pub fn from_luma(frame: &LumaFrame) -> Self {
        Self {
            w: frame.width(),
            h: frame.height(),
            data: frame.data().iter().map(|&v| v as f32).collect(),
        }
    }

    #[inline]
    pub fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    /// Bilinear sample with edge replication.
    #[cfg(test)]
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.w - 1) as f32);
        let y = y.clamp(0.0, (self.h - 1) as f32);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let (fx, fy) = (x - x0 as f32, y - y0 as f32);
        let r0 = &self.data[y0 * self.w..];
        let r1 = &self.data[y1 * self.w..];
        let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
        let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
        top + (bottom - top) * fy
    }

    /// Gaussian [1 4 6 4 1]/16 blur followed by 2x decimation.
    pub fn pyr_down(&self) -> Plane {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (ow, oh) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut tmp = Plane::zeros(ow, self.h);
        for y in 0..self.h {
            for ox in 0..ow {
                let cx = (2 * ox) as isize;
                let mut acc = 0.0;
                for (k, wk) in K.iter().enumerate() {
                    acc += wk * self.at(cx + k as isize - 2, y as isize);
                }
                tmp.data[y * ow + ox] = acc;
            }
        }
        let mut out = Plane::zeros(ow, oh);
        for oy in 0..oh {
            let cy = (2 * oy) as isize;
            for ox in 0..ow {
                let mut acc = 0.0;
                for (k, wk) in K.iter().enumerate() {
                    acc += wk * tmp.at(ox as isize, cy + k as isize - 2);
                }
                out.data[oy * ow + ox] = acc;
            }
        }
        out
    }

    /// Scharr derivatives normalized to luma per pixel, edge replicated.
    pub fn gradients(&self) -> (Plane, Plane) {
        let mut gx = Plane::zeros(self.w, self.h);
        let mut gy = Plane::zeros(self.w, self.h);
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let p = |dx: isize, dy: isize| self.at(x + dx, y + dy);
                let dx = 3.0 * (p(1, -1) - p(-1, -1))
                    + 10.0 * (p(1, 0) - p(-1, 0))
                    + 3.0 * (p(1, 1) - p(-1, 1));
                let dy = 3.0 * (p(-1, 1) - p(-1, -1))
                    + 10.0 * (p(0, 1) - p(0, -1))
                    + 3.0 * (p(1, 1) - p(1, -1));
                let i = y as usize * self.w + x as usize;
                gx.data[i] = dx / 32.0;
                gy.data[i] = dy / 32.0;
            }
        }
        (gx, gy)
    }
}

/// A plane stored with `pad` replicated border pixels on every side, so
/// integration windows near the edge read contiguous memory.
#[derive(Debug, Clone)]
pub(crate) struct PaddedPlane {
    pub w: usize,
    pub h: usize,
    pad: usize,
    stride: usize,
    data: Vec<f32>,
}

impl PaddedPlane {
    pub fn new(p: &Plane, pad: usize) -> Self {
        let stride = p.w + 2 * pad;
        let mut data = Vec::with_capacity(stride * (p.h + 2 * pad));
        for yy in 0..p.h + 2 * pad {
            let y = yy.saturating_sub(pad).min(p.h - 1);
            let row = &p.data[y * p.w..][..p.w];
            data.extend(std::iter::repeat_n(row[0], pad));
            data.extend_from_slice(row);
            data.extend(std::iter::repeat_n(row[p.w - 1], pad));
        }
        Self {
            w: p.w,
            h: p.h,
            pad,
            stride,
            data,
        }
    }

    /// Samples the window centred at `(cx, cy)` into `out`, bilinear with edge
    /// replication. Rows are `shape.cols` wide; columns past `shape.side` hold
    /// the continuation of the row and are ignored by callers. All taps share
    /// one fractional offset, so the weights are computed once per window.
    pub fn sample_window(
        &self,
        cx: f32,
        cy: f32,
        shape: WindowShape,
        out: &mut [f32],
        scratch: &mut [f32],
    ) {
        let (half, side, cols) = (shape.half as isize, shape.side, shape.cols);
        assert!(out.len() == side * cols && scratch.len() == (side + 1) * cols);
        let (fx0, fy0) = (cx.floor(), cy.floor());
        let pad = self.pad as isize;
        let (bx, by) = (fx0 as isize - half + pad, fy0 as isize - half + pad);
        let fast = cx.is_finite()
            && cy.is_finite()
            && bx >= 0
            && by >= 0
            && bx + (cols as isize) < self.stride as isize
            && by + (side as isize) < (self.h + 2 * self.pad) as isize;
        if !fast {
            return self.sample_window_clamped(cx, cy, shape, out);
        }
        let src = &self.data[by as usize * self.stride + bx as usize..];
        let (fx, fy) = (cx - fx0, cy - fy0);
        lerp_window(src, self.stride, fx, fy, shape, out, scratch)
    }

    #[cold]
    #[inline(never)]
    fn sample_window_clamped(&self, cx: f32, cy: f32, shape: WindowShape, out: &mut [f32]) {
        let (half, side, cols) = (shape.half as isize, shape.side, shape.cols);
        let mut xs = [(0usize, 0usize, 0.0f32); MAX_WINDOW_COLS];
        let mut ys = [(0usize, 0usize, 0.0f32); MAX_WINDOW_COLS];
        window_taps(cx, half, self.w, &mut xs[..cols]);
        window_taps(cy, half, self.h, &mut ys[..side]);
        let at = |x: usize, y: usize| self.data[(y + self.pad) * self.stride + x + self.pad];
        for (row, &(y0, y1, fy)) in out.chunks_exact_mut(cols).zip(&ys[..side]) {
            for (v, &(x0, x1, fx)) in row.iter_mut().zip(&xs[..cols]) {
                let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * fx;
                let bottom = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * fx;
                *v = top + (bottom - top) * fy;
            }
        }
    }
}

/// Bilinear window read from a source whose top-left tap is `src[0]`:
/// a horizontal pass over `side + 1` rows, then one flat vertical pass.
fn lerp_window(
    src: &[f32],
    stride: usize,
    fx: f32,
    fy: f32,
    shape: WindowShape,
    out: &mut [f32],
    scratch: &mut [f32],
) {
    // Fixed widths let the row pass unroll completely.
    match shape.cols {
        8 => lerp_rows::<8>(src, stride, fx, scratch),
        16 => lerp_rows::<16>(src, stride, fx, scratch),
        24 => lerp_rows::<24>(src, stride, fx, scratch),
        32 => lerp_rows::<32>(src, stride, fx, scratch),
        cols => {
            for (r, dst) in scratch.chunks_exact_mut(cols).enumerate() {
                let row = &src[r * stride..][..cols + 1];
                for ((d, &a), &b) in dst.iter_mut().zip(&row[..cols]).zip(&row[1..]) {
                    *d = a + (b - a) * fx;
                }
            }
        }
    }
    let (side, cols) = (shape.side, shape.cols);
    let (top, bottom) = (&scratch[..side * cols], &scratch[cols..]);
    for ((o, &a), &b) in out.iter_mut().zip(top).zip(bottom) {
        *o = a + (b - a) * fy;
    }
}

fn lerp_rows<const C: usize>(src: &[f32], stride: usize, fx: f32, scratch: &mut [f32]) {
    for (r, dst) in scratch.chunks_exact_mut(C).enumerate() {
        let row = &src[r * stride..][..C + 1];
        for c in 0..C {
            dst[c] = row[c] + (row[c + 1] - row[c]) * fx;
        }
    }
}

/// Gaussian pyramid, finest level first. Stops early once a level would drop
/// below `min_side` pixels on either axis.
pub(crate) fn build_pyramid(base: Plane, levels: usize, min_side: usize) -> Vec<Plane> {
    let mut out = vec![base];
    while out.len() < levels {
        let last = out.last().unwrap();
        if last.w.div_ceil(2) < min_side || last.h.div_ceil(2) < min_side {
            break;
        }
        let next = last.pyr_down();
        out.push(next);
    }
    out
}
