//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::path::PathBuf;

use flowgebd_core::fnorm::patchflow_series;
use flowgebd_core::grid::{make_grid, PatchKind};
use flowgebd_core::kernels::{farneback_flow, lk_track, FlowParams, PixelPoint};
use flowgebd_core::synth::{smoothed_noise, SynthVideo};
use flowgebd_core::{FrameSequence, LumaFrame};
use nalgebra::{Matrix2, SymmetricEigen};

/// Fixture root of the core crate, also when included from the cli tests.
pub fn fixture_dir() -> PathBuf {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let core = if here.ends_with("core") {
        here
    } else {
        here.join("../core")
    };
    core.join("tests/fixtures")
}

/// Deterministic byte noise without pulling an RNG into every test crate.
pub fn noise_frame(width: usize, height: usize, seed: u64) -> LumaFrame {
    LumaFrame::from_fn(width, height, |x, y| {
        let mut z = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((y * width + x) as u64)
            .wrapping_add(0x632B_E59B_D9B4_E019);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ((z ^ (z >> 31)) >> 56) as u8
    })
}

/// A texture and a copy whose content moved by `(dx, dy)`.
pub fn shifted_pair(seed: u64, dx: i32, dy: i32, size: usize) -> (LumaFrame, LumaFrame) {
    let pad = 8usize;
    let big = smoothed_noise(size + 2 * pad, size + 2 * pad, seed);
    let crop = |ox: i32, oy: i32| {
        LumaFrame::from_fn(size, size, |x, y| {
            big.get(
                (x as i32 + pad as i32 + ox) as usize,
                (y as i32 + pad as i32 + oy) as usize,
            )
        })
    };
    (crop(0, 0), crop(-dx, -dy))
}

pub const SHIFTS: [i32; 6] = [-4, -2, -1, 1, 2, 4];

#[derive(Debug, Default, Clone, Copy)]
pub struct TranslationStats {
    pub pairs: usize,
    pub lk_tracked: usize,
    pub lk_within: usize,
    /// Worst per-pair error of the component-wise median Farneback vector.
    pub farneback_worst_median_err: f64,
}

impl TranslationStats {
    pub fn lk_fraction(&self) -> f64 {
        self.lk_within as f64 / self.lk_tracked.max(1) as f64
    }
}

fn median(mut v: Vec<f32>) -> f64 {
    v.sort_by(f32::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] as f64 + v[n / 2] as f64)
    }
}

/// Tracks a lattice of interior points across every shift in `SHIFTS`^2 for
/// each texture seed.
pub fn translation_oracle(seeds: impl IntoIterator<Item = u64>, size: usize) -> TranslationStats {
    let params = FlowParams::default();
    let margin = 16;
    let points: Vec<PixelPoint> = (margin..size - margin)
        .step_by(8)
        .flat_map(|y| {
            (margin..size - margin)
                .step_by(8)
                .map(move |x| PixelPoint::new(x as f32, y as f32))
        })
        .collect();
    let mut stats = TranslationStats::default();
    for seed in seeds {
        for &dy in &SHIFTS {
            for &dx in &SHIFTS {
                let (a, b) = shifted_pair(seed, dx, dy, size);
                stats.pairs += 1;
                let res = lk_track(&a, &b, &points, &params).unwrap();
                for p in res.points.iter().filter(|p| p.is_tracked()) {
                    stats.lk_tracked += 1;
                    let err = ((p.displacement[0] - dx as f32).powi(2)
                        + (p.displacement[1] - dy as f32).powi(2))
                    .sqrt();
                    if err <= 0.25 {
                        stats.lk_within += 1;
                    }
                }
                let field = farneback_flow(&a, &b, &params).unwrap();
                let (mut us, mut vs) = (Vec::new(), Vec::new());
                for y in margin..size - margin {
                    for x in margin..size - margin {
                        let [u, v] = field.at(x, y);
                        us.push(u);
                        vs.push(v);
                    }
                }
                let err = (median(us) - dx as f64).hypot(median(vs) - dy as f64);
                stats.farneback_worst_median_err = stats.farneback_worst_median_err.max(err);
            }
        }
    }
    stats
}

/// Min eigenvalue of the 3x3-summed Sobel structure tensor, computed pixel by
/// pixel with clamped coordinates and a general symmetric eigensolver.
pub fn brute_force_min_eigen(frame: &LumaFrame) -> Vec<f64> {
    let (w, h) = (frame.width() as isize, frame.height() as isize);
    let px = |x: isize, y: isize| {
        frame.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize) as f64
    };
    let grad = |x: isize, y: isize| {
        let (x, y) = (x.clamp(0, w - 1), y.clamp(0, h - 1));
        let mut g = [0.0; 2];
        for (j, s) in [(-1, 1.0), (0, 2.0), (1, 1.0)] {
            g[0] += s * (px(x + 1, (y + j).clamp(0, h - 1)) - px(x - 1, (y + j).clamp(0, h - 1)));
            g[1] += s * (px((x + j).clamp(0, w - 1), y + 1) - px((x + j).clamp(0, w - 1), y - 1));
        }
        g
    };
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let mut m = Matrix2::<f64>::zeros();
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let [gx, gy] = grad(x + dx, y + dy);
                    m += Matrix2::new(gx * gx, gx * gy, gx * gy, gy * gy);
                }
            }
            let eig = SymmetricEigen::new(m).eigenvalues;
            out.push(eig.min().max(0.0));
        }
    }
    out
}

/// Share of flow-series energy in the dot's base patch and the centroidal
/// patches overlapping it, on the 5x5 grid.
pub fn dot_energy_fraction(video: &SynthVideo, fps: f64) -> f64 {
    let (w, h) = (video.frames[0].width(), video.frames[0].height());
    let grid = make_grid(w, h, 5, 5).unwrap();
    let home = &grid.patches()[video.dot_patch.expect("moving-dot video")];
    let seq = FrameSequence::from_frames(video.frames.clone(), fps).unwrap();
    let series = patchflow_series(&seq, &grid, &FlowParams::default()).unwrap();
    let (mut inside, mut total) = (0.0, 0.0);
    for s in &series {
        let rect = &grid.patches()[s.patch_index];
        let e: f64 = s.values.iter().map(|v| v * v).sum();
        total += e;
        let allowed = rect.index == home.index
            || (rect.kind == PatchKind::Centroidal && rect.overlap(home) > 0);
        if allowed {
            inside += e;
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

/// Small deterministic generator for randomized checks outside proptest.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}
