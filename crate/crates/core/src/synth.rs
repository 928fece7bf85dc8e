//! Deterministic synthetic videos with exact ground-truth boundaries.
//!
//! Event times are snapped to the frame grid: an event at frame `e` means
//! frame `e` is the first frame showing the changed content, and its
//! annotated time is `e / fps`.

use std::fs;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{AnnotationFile, VideoAnnotation};
use crate::frame::LumaFrame;
use crate::grid::make_grid;
use crate::mix_seed;

/// Side of the moving block in motion videos.
pub const BLOCK_SIDE: usize = 24;
/// Block speed in pixels per frame.
pub const BLOCK_SPEED: usize = 2;
/// Frames a motion-onset burst keeps moving after its event.
pub const BURST_FRAMES: usize = 2;
/// Smallest allowed gap between events, in seconds.
pub const MIN_EVENT_GAP_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Independent static textures per segment, hard cuts at events.
    SceneCut,
    /// Static scene; a textured block makes a short translation burst at each event.
    MotionOnset,
    /// Static scene; a block oscillates inside one base patch of a 5x5 grid the whole time.
    MovingDot,
    /// One texture, identical frames.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub duration_s: f64,
    pub fps: f64,
    pub size: (usize, usize),
    pub events: Vec<f64>,
    pub texture_seed: u64,
}

/// A rendered video together with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub frames: Vec<LumaFrame>,
    pub annotation: VideoAnnotation,
    /// For moving-dot videos, index of the base patch containing the block.
    pub dot_patch: Option<usize>,
}

impl SynthSpec {
    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    /// Event frame indices after snapping to the frame grid.
    pub fn event_frames(&self) -> Vec<usize> {
        self.events
            .iter()
            .map(|t| (t * self.fps).round() as usize)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps >= 2.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!(
                "synthetic fps must be >= 2, got {}",
                self.fps
            )));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) || self.frame_count() < 2 {
            return Err(Error::Config(
                "synthetic video needs at least 2 frames".into(),
            ));
        }
        if self.size.0 < 16 || self.size.1 < 16 {
            return Err(Error::Config(
                "synthetic frames must be at least 16x16".into(),
            ));
        }
        let n = self.frame_count();
        for w in self.events.windows(2) {
            if w[1] - w[0] < MIN_EVENT_GAP_S - 1e-9 {
                return Err(Error::Config(format!(
                    "events {} and {} are closer than {MIN_EVENT_GAP_S} s",
                    w[0], w[1]
                )));
            }
        }
        for (&t, e) in self.events.iter().zip(self.event_frames()) {
            if !(t > 0.0 && t < self.duration_s) || e == 0 || e >= n {
                return Err(Error::Config(format!(
                    "event {t} s must fall strictly inside the video"
                )));
            }
        }
        match self.kind {
            SynthKind::Static | SynthKind::MovingDot if !self.events.is_empty() => Err(
                Error::Config(format!("{:?} videos carry no events", self.kind)),
            ),
            SynthKind::MovingDot if self.size.0 / 5 < BLOCK_SIDE + 2 * BLOCK_SPEED => Err(
                Error::Config("frame too small to keep the block inside one base patch".into()),
            ),
            SynthKind::MotionOnset
                if self.size.0 < BLOCK_SIDE + 16 || self.size.1 < BLOCK_SIDE + 16 =>
            {
                Err(Error::Config("frame too small for the moving block".into()))
            }
            _ => Ok(()),
        }
    }
}

/// I.i.d. uniform bytes smoothed once with a 3x3 box filter (edges replicated).
pub fn smoothed_noise(width: usize, height: usize, seed: u64) -> LumaFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = vec![0u8; width * height];
    rng.fill_bytes(&mut raw);
    LumaFrame::from_fn(width, height, |x, y| {
        let mut sum = 0u32;
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let xx = (x as isize + dx).clamp(0, width as isize - 1) as usize;
                let yy = (y as isize + dy).clamp(0, height as isize - 1) as usize;
                sum += raw[yy * width + xx] as u32;
            }
        }
        ((sum + 4) / 9) as u8
    })
}

fn paste_block(bg: &LumaFrame, block: &LumaFrame, x0: usize, y0: usize) -> LumaFrame {
    LumaFrame::from_fn(bg.width(), bg.height(), |x, y| {
        if x >= x0 && y >= y0 && x < x0 + block.width() && y < y0 + block.height() {
            block.get(x - x0, y - y0)
        } else {
            bg.get(x, y)
        }
    })
}

pub fn render(spec: &SynthSpec, video_id: &str) -> Result<SynthVideo> {
    spec.validate()?;
    let (w, h) = spec.size;
    let n = spec.frame_count();
    let events = spec.event_frames();
    let texture = |k: u64| smoothed_noise(w, h, mix_seed(spec.texture_seed, k));
    let mut dot_patch = None;
    let frames = match spec.kind {
        SynthKind::Static => vec![texture(0); n],
        SynthKind::SceneCut => {
            let segments: Vec<LumaFrame> = (0..=events.len() as u64).map(texture).collect();
            (0..n)
                .map(|k| segments[events.iter().filter(|&&e| e <= k).count()].clone())
                .collect()
        }
        SynthKind::MotionOnset => {
            let bg = texture(0);
            let block = smoothed_noise(BLOCK_SIDE, BLOCK_SIDE, mix_seed(spec.texture_seed, 1));
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.texture_seed, 2));
            let reach = BURST_FRAMES * BLOCK_SPEED;
            let x_start = rng.gen_range(8..=w - BLOCK_SIDE - 8 - reach);
            let y0 = rng.gen_range(8..=h - BLOCK_SIDE - 8);
            // Bursts alternate right and left so the block never drifts away.
            let mut x = x_start as isize;
            let mut out = Vec::with_capacity(n);
            for k in 0..n {
                if let Some(b) = events.iter().position(|&e| k >= e && k < e + BURST_FRAMES) {
                    let dir = if b % 2 == 0 { 1 } else { -1 };
                    x += dir * BLOCK_SPEED as isize;
                }
                out.push(paste_block(&bg, &block, x as usize, y0));
            }
            out
        }
        SynthKind::MovingDot => {
            let grid = make_grid(w, h, 5, 5)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.texture_seed, 2));
            let patch = grid
                .base_patches()
                .nth(rng.gen_range(0..25))
                .copied()
                .unwrap();
            dot_patch = Some(patch.index);
            let bg = texture(0);
            let block = smoothed_noise(BLOCK_SIDE, BLOCK_SIDE, mix_seed(spec.texture_seed, 1));
            // Keep one pixel of clearance from the patch edges.
            let span = patch.width - BLOCK_SIDE - 2;
            let steps = span / BLOCK_SPEED;
            let y0 = patch.y0 + (patch.height - BLOCK_SIDE) / 2;
            (0..n)
                .map(|k| {
                    let phase = k % (2 * steps);
                    let off = if phase <= steps {
                        phase
                    } else {
                        2 * steps - phase
                    };
                    paste_block(&bg, &block, patch.x0 + 1 + off * BLOCK_SPEED, y0)
                })
                .collect()
        }
    };
    let boundaries = events.iter().map(|&e| e as f64 / spec.fps).collect();
    Ok(SynthVideo {
        frames,
        annotation: VideoAnnotation {
            video_id: video_id.to_string(),
            duration_s: n as f64 / spec.fps,
            annotators: vec![boundaries],
        },
        dot_patch,
    })
}

/// Writes numbered PGM frames (`0001.pgm`, ...) and `annotation.json` into `out`.
pub fn generate(spec: &SynthSpec, video_id: &str, out: &Path) -> Result<VideoAnnotation> {
    let video = render(spec, video_id)?;
    write_frames(&video.frames, out)?;
    let file = AnnotationFile {
        videos: vec![video.annotation.clone()],
    };
    file.save(&out.join("annotation.json"))?;
    Ok(video.annotation)
}

pub fn write_frames(frames: &[LumaFrame], out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (i, f) in frames.iter().enumerate() {
        let path = out.join(format!("{:04}.pgm", i + 1));
        let mut bytes = format!("P5\n{} {}\n255\n", f.width(), f.height()).into_bytes();
        bytes.extend_from_slice(f.data());
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Picks `count` event frames in `[lo, hi]` at least `gap` frames apart.
fn pick_event_frames(
    rng: &mut ChaCha8Rng,
    count: usize,
    lo: usize,
    hi: usize,
    gap: usize,
) -> Vec<usize> {
    loop {
        let mut frames: Vec<usize> = (0..count).map(|_| rng.gen_range(lo..=hi)).collect();
        frames.sort_unstable();
        if frames.windows(2).all(|w| w[1] - w[0] >= gap) {
            return frames;
        }
    }
}

/// A randomized spec of the given kind with `min_events..=max_events` events.
pub fn random_spec(
    kind: SynthKind,
    seed: u64,
    duration_s: f64,
    fps: f64,
    size: (usize, usize),
    min_events: usize,
    max_events: usize,
) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5eed));
    let n = (duration_s * fps).round() as usize;
    let gap = (MIN_EVENT_GAP_S * fps).ceil() as usize;
    let events = match kind {
        SynthKind::Static | SynthKind::MovingDot => Vec::new(),
        SynthKind::SceneCut | SynthKind::MotionOnset => {
            let count = rng.gen_range(min_events..=max_events);
            let hi = if kind == SynthKind::MotionOnset {
                n - BURST_FRAMES
            } else {
                n - 1
            };
            pick_event_frames(&mut rng, count, 1, hi, gap)
                .into_iter()
                .map(|e| e as f64 / fps)
                .collect()
        }
    };
    SynthSpec {
        kind,
        duration_s,
        fps,
        size,
        events,
        texture_seed: seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: SynthKind, events: Vec<f64>) -> SynthSpec {
        SynthSpec {
            kind,
            duration_s: 10.0,
            fps: 4.0,
            size: (160, 160),
            events,
            texture_seed: 17,
        }
    }

    fn correlation(a: &LumaFrame, b: &LumaFrame) -> f64 {
        let n = a.data().len() as f64;
        let ma = a.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let mb = b.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (&x, &y) in a.data().iter().zip(b.data()) {
            let (x, y) = (x as f64 - ma, y as f64 - mb);
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn scene_cut_segments() {
        let v = render(&spec(SynthKind::SceneCut, vec![5.0]), "cut").unwrap();
        assert_eq!(v.frames.len(), 40);
        assert!(v.frames[..20].iter().all(|f| *f == v.frames[0]));
        assert!(v.frames[20..].iter().all(|f| *f == v.frames[20]));
        assert_ne!(v.frames[19], v.frames[20]);
        assert_eq!(v.annotation.annotators, vec![vec![5.0]]);
        assert!(correlation(&v.frames[0], &v.frames[20]).abs() < 0.1);
    }

    #[test]
    fn static_video_is_constant_in_time() {
        let v = render(&spec(SynthKind::Static, vec![]), "s").unwrap();
        assert!(v.frames.iter().all(|f| *f == v.frames[0]));
        assert_eq!(v.annotation.annotators, vec![Vec::<f64>::new()]);
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = spec(SynthKind::MotionOnset, vec![2.0, 6.5]);
        let a = render(&s, "m").unwrap();
        let b = render(&s, "m").unwrap();
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn motion_onset_changes_only_at_bursts() {
        let v = render(&spec(SynthKind::MotionOnset, vec![2.0, 6.5]), "m").unwrap();
        let changed: Vec<usize> = (1..v.frames.len())
            .filter(|&k| v.frames[k] != v.frames[k - 1])
            .collect();
        assert_eq!(changed, vec![8, 9, 26, 27]);
        // the block returns home after a right/left pair
        assert_eq!(v.frames[0], v.frames[39]);
    }

    #[test]
    fn moving_dot_stays_in_its_patch() {
        let s = spec(SynthKind::MovingDot, vec![]);
        let v = render(&s, "d").unwrap();
        let grid = make_grid(160, 160, 5, 5).unwrap();
        let home = grid.patches()[v.dot_patch.unwrap()];
        for f in &v.frames[1..] {
            for y in 0..160 {
                for x in 0..160 {
                    if f.get(x, y) != v.frames[0].get(x, y) {
                        assert!(home.contains(x, y), "change at ({x}, {y}) outside {home:?}");
                    }
                }
            }
        }
        assert!(v.frames.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn rejects_close_or_outside_events() {
        assert!(spec(SynthKind::SceneCut, vec![3.0, 3.5])
            .validate()
            .is_err());
        assert!(spec(SynthKind::SceneCut, vec![10.0]).validate().is_err());
        assert!(spec(SynthKind::SceneCut, vec![0.0]).validate().is_err());
        assert!(spec(SynthKind::Static, vec![2.0]).validate().is_err());
    }

    #[test]
    fn random_specs_are_valid() {
        for seed in 0..50 {
            let s = random_spec(SynthKind::SceneCut, seed, 10.0, 4.0, (160, 160), 1, 4);
            s.validate().unwrap();
            assert!((1..=4).contains(&s.events.len()));
            let m = random_spec(SynthKind::MotionOnset, seed, 10.0, 4.0, (160, 160), 1, 3);
            m.validate().unwrap();
        }
    }
}
