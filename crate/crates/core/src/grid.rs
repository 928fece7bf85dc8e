//! Base + centroidal patch decomposition of a frame.
//!
//! Base patches tile the frame in an `n_w x n_h` grid. Centroidal patches have
//! the same size and are shifted by half a patch in each direction, so each one
//! is centered on the shared corner of four base patches.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::LumaFrame;

/// Smallest patch side the flow kernels accept.
pub const MIN_PATCH_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchKind {
    Base,
    Centroidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PatchRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub kind: PatchKind,
    pub index: usize,
}

impl PatchRect {
    /// A base rect covering a whole `width x height` frame.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            width,
            height,
            kind: PatchKind::Base,
            index: 0,
        }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.width > 0
            && self.height > 0
            && self.x0 + self.width <= width
            && self.y0 + self.height <= height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.width && y >= self.y0 && y < self.y0 + self.height
    }

    /// Number of pixels shared with `other`.
    pub fn overlap(&self, other: &PatchRect) -> usize {
        let x = (self.x0 + self.width).min(other.x0 + other.width) as isize
            - self.x0.max(other.x0) as isize;
        let y = (self.y0 + self.height).min(other.y0 + other.height) as isize
            - self.y0.max(other.y0) as isize;
        if x <= 0 || y <= 0 {
            0
        } else {
            (x * y) as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    n_w: usize,
    n_h: usize,
    patch_width: usize,
    patch_height: usize,
    patches: Vec<PatchRect>,
}

/// Number of patches for an `n_w x n_h` base grid.
pub fn patch_count(n_w: usize, n_h: usize) -> usize {
    n_w * n_h + n_w.saturating_sub(1) * n_h.saturating_sub(1)
}

pub fn make_grid(width: usize, height: usize, n_w: usize, n_h: usize) -> Result<PatchGrid> {
    if n_w == 0 || n_h == 0 {
        return Err(Error::Config(format!(
            "grid must be at least 1x1, got {n_w}x{n_h}"
        )));
    }
    let (wg, hg) = (width / n_w, height / n_h);
    if wg < MIN_PATCH_SIDE || hg < MIN_PATCH_SIDE {
        return Err(Error::Config(format!(
            "{n_w}x{n_h} grid on {width}x{height} gives {wg}x{hg} patches, minimum is {MIN_PATCH_SIDE}x{MIN_PATCH_SIDE}"
        )));
    }
    let mut patches = Vec::with_capacity(patch_count(n_w, n_h));
    for j in 0..n_h {
        for i in 0..n_w {
            patches.push(PatchRect {
                x0: i * wg,
                y0: j * hg,
                width: wg,
                height: hg,
                kind: PatchKind::Base,
                index: patches.len(),
            });
        }
    }
    for j in 0..n_h.saturating_sub(1) {
        for i in 0..n_w.saturating_sub(1) {
            patches.push(PatchRect {
                x0: i * wg + wg / 2,
                y0: j * hg + hg / 2,
                width: wg,
                height: hg,
                kind: PatchKind::Centroidal,
                index: patches.len(),
            });
        }
    }
    Ok(PatchGrid {
        n_w,
        n_h,
        patch_width: wg,
        patch_height: hg,
        patches,
    })
}

impl PatchGrid {
    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn patch_size(&self) -> (usize, usize) {
        (self.patch_width, self.patch_height)
    }

    pub fn patches(&self) -> &[PatchRect] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn base_patches(&self) -> impl Iterator<Item = &PatchRect> {
        self.patches.iter().filter(|p| p.kind == PatchKind::Base)
    }

    pub fn centroidal_patches(&self) -> impl Iterator<Item = &PatchRect> {
        self.patches
            .iter()
            .filter(|p| p.kind == PatchKind::Centroidal)
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.patches.iter().all(|p| p.fits_in(width, height))
    }
}

pub fn extract_patch(frame: &LumaFrame, rect: &PatchRect) -> Result<LumaFrame> {
    if !rect.fits_in(frame.width(), frame.height()) {
        return Err(Error::Dimension(format!(
            "patch {}x{} at ({}, {}) exceeds {}x{} frame",
            rect.width,
            rect.height,
            rect.x0,
            rect.y0,
            frame.width(),
            frame.height()
        )));
    }
    let w = frame.width();
    let mut data = Vec::with_capacity(rect.area());
    for y in rect.y0..rect.y0 + rect.height {
        data.extend_from_slice(&frame.data()[y * w + rect.x0..y * w + rect.x0 + rect.width]);
    }
    LumaFrame::new(rect.width, rect.height, data)
}
