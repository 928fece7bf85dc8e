//! Frame ingestion and canonical preprocessing.
//!
//! Sources are decoded lazily into a stream of [`RawFrame`]s, then
//! [`preprocess`] picks the nearest source frame for every output sample time,
//! converts it to luma and resizes it to the analysis resolution.

use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FrameSequence, LumaFrame};

pub const DEFAULT_TARGET_FPS: f64 = 4.0;
pub const DEFAULT_TARGET_SIZE: (usize, usize) = (160, 160);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    ImageDir,
    Y4mFile,
    RawYuv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelFormat {
    Yuv420p,
    Gray8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawGeometry {
    pub width: usize,
    pub height: usize,
    pub format: PixelFormat,
}

impl RawGeometry {
    fn frame_bytes(&self) -> usize {
        let luma = self.width * self.height;
        match self.format {
            PixelFormat::Gray8 => luma,
            PixelFormat::Yuv420p => luma + 2 * self.width.div_ceil(2) * self.height.div_ceil(2),
        }
    }
}

/// JSON sidecar describing a headerless raw YUV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub format: PixelFormat,
}

impl RawSidecar {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub path: PathBuf,
    /// Required for image directories and raw YUV; read from the header for Y4M.
    pub native_fps: Option<f64>,
    pub raw_geometry: Option<RawGeometry>,
}

impl SourceSpec {
    pub fn image_dir(path: impl Into<PathBuf>, native_fps: f64) -> Self {
        Self {
            kind: SourceKind::ImageDir,
            path: path.into(),
            native_fps: Some(native_fps),
            raw_geometry: None,
        }
    }

    pub fn y4m(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: SourceKind::Y4mFile,
            path: path.into(),
            native_fps: None,
            raw_geometry: None,
        }
    }

    pub fn raw_yuv(path: impl Into<PathBuf>, geometry: RawGeometry, native_fps: f64) -> Self {
        Self {
            kind: SourceKind::RawYuv,
            path: path.into(),
            native_fps: Some(native_fps),
            raw_geometry: Some(geometry),
        }
    }

    pub fn raw_yuv_with_sidecar(path: impl Into<PathBuf>, sidecar: &Path) -> Result<Self> {
        let side = RawSidecar::load(sidecar)?;
        Ok(Self::raw_yuv(
            path,
            RawGeometry {
                width: side.width,
                height: side.height,
                format: side.format,
            },
            side.fps,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.path.exists() {
            return Err(Error::io(
                &self.path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "source does not exist"),
            ));
        }
        if let Some(fps) = self.native_fps {
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(Error::Config(format!(
                    "native fps must be positive, got {fps}"
                )));
            }
        }
        match self.kind {
            SourceKind::ImageDir if self.native_fps.is_none() => Err(Error::Config(
                "image directory sources need a native fps".into(),
            )),
            SourceKind::RawYuv if self.raw_geometry.is_none() => Err(Error::Format(
                "raw-yuv source requires width, height and pixel format".into(),
            )),
            SourceKind::RawYuv if self.native_fps.is_none() => {
                Err(Error::Config("raw-yuv sources need a native fps".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pixels {
    Gray(Vec<u8>),
    /// Interleaved 8-bit RGB.
    Rgb(Vec<u8>),
}

/// A decoded source frame at native resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Pixels,
}

impl RawFrame {
    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Self {
        Self {
            width,
            height,
            pixels: Pixels::Gray(data),
        }
    }

    pub fn to_luma(&self) -> Result<LumaFrame> {
        let data = match &self.pixels {
            Pixels::Gray(d) => d.clone(),
            Pixels::Rgb(d) => d
                .chunks_exact(3)
                .map(|p| rgb_to_luma(p[0], p[1], p[2]))
                .collect(),
        };
        LumaFrame::new(self.width, self.height, data)
    }
}

/// BT.601 luma with round-half-up.
#[inline]
pub fn rgb_to_luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

type FrameIter = Box<dyn Iterator<Item = Result<RawFrame>> + Send>;

/// Lazily decoded frames plus source metadata.
pub struct FrameStream {
    native_fps: f64,
    inner: FrameIter,
    dims: Option<(usize, usize)>,
    index: usize,
    failed: bool,
}

impl FrameStream {
    pub fn new(native_fps: f64, inner: FrameIter) -> Self {
        Self {
            native_fps,
            inner,
            dims: None,
            index: 0,
            failed: false,
        }
    }

    pub fn from_frames(native_fps: f64, frames: Vec<RawFrame>) -> Self {
        Self::new(native_fps, Box::new(frames.into_iter().map(Ok)))
    }

    pub fn native_fps(&self) -> f64 {
        self.native_fps
    }

    /// Drains the stream; returns the frames and the source duration in seconds.
    pub fn collect_all(self) -> Result<(Vec<RawFrame>, f64)> {
        let fps = self.native_fps;
        let frames = self.collect::<Result<Vec<_>>>()?;
        let duration = frames.len() as f64 / fps;
        Ok((frames, duration))
    }
}

impl Iterator for FrameStream {
    type Item = Result<RawFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.inner.next()?;
        let index = self.index;
        self.index += 1;
        let item = item.and_then(|frame| match self.dims {
            None => {
                self.dims = Some((frame.width, frame.height));
                Ok(frame)
            }
            Some((w, h)) if (w, h) == (frame.width, frame.height) => Ok(frame),
            Some((w, h)) => Err(Error::Format(format!(
                "frame {index} is {}x{}, expected {w}x{h}",
                frame.width, frame.height
            ))),
        });
        if item.is_err() {
            self.failed = true;
        }
        Some(item)
    }
}

pub fn load_frames(spec: &SourceSpec) -> Result<FrameStream> {
    spec.validate()?;
    match spec.kind {
        SourceKind::ImageDir => load_image_dir(&spec.path, spec.native_fps.unwrap()),
        SourceKind::Y4mFile => load_y4m(&spec.path, spec.native_fps),
        SourceKind::RawYuv => load_raw_yuv(
            &spec.path,
            spec.raw_geometry.unwrap(),
            spec.native_fps.unwrap(),
        ),
    }
}

fn is_frame_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        .unwrap_or(false)
}

/// Sorted frame files (PGM or PNG) of an image directory.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_frame_file(&path) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Format(format!(
            "{} contains no .pgm or .png frames",
            dir.display()
        )));
    }
    Ok(files)
}

fn decode_image(path: &Path) -> Result<RawFrame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Decode {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        image::DynamicImage::ImageLuma8(buf) => Pixels::Gray(buf.into_raw()),
        image::DynamicImage::ImageLumaA8(buf) => {
            Pixels::Gray(buf.into_raw().chunks_exact(2).map(|p| p[0]).collect())
        }
        image::DynamicImage::ImageRgb8(buf) => Pixels::Rgb(buf.into_raw()),
        image::DynamicImage::ImageRgba8(buf) => Pixels::Rgb(
            buf.into_raw()
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
        ),
        other => {
            return Err(Error::Decode {
                path: path.to_owned(),
                message: format!("unsupported pixel type {:?}, expected 8-bit", other.color()),
            })
        }
    };
    Ok(RawFrame {
        width,
        height,
        pixels,
    })
}

fn load_image_dir(dir: &Path, native_fps: f64) -> Result<FrameStream> {
    let files = list_frame_files(dir)?;
    Ok(FrameStream::new(
        native_fps,
        Box::new(files.into_iter().map(|p| decode_image(&p))),
    ))
}

fn load_y4m(path: &Path, fps_override: Option<f64>) -> Result<FrameStream> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let y4m_err = |e: y4m::Error| Error::Decode {
        path: path.to_owned(),
        message: e.to_string(),
    };
    let mut decoder = y4m::decode(BufReader::new(file)).map_err(y4m_err)?;
    if decoder.get_bit_depth() != 8 {
        return Err(Error::Format(format!(
            "{}: only 8-bit Y4M is supported, got {} bits",
            path.display(),
            decoder.get_bit_depth()
        )));
    }
    let rate = decoder.get_framerate();
    let header_fps = if rate.den == 0 {
        0.0
    } else {
        rate.num as f64 / rate.den as f64
    };
    let native_fps = fps_override.unwrap_or(header_fps);
    if !(native_fps > 0.0) {
        return Err(Error::Format(format!(
            "{}: invalid frame rate {}:{}",
            path.display(),
            rate.num,
            rate.den
        )));
    }
    let (width, height) = (decoder.get_width(), decoder.get_height());
    let path = path.to_owned();
    let mut index = 0usize;
    let mut done = false;
    let iter = std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = match decoder.read_frame() {
            Ok(frame) => Some(Ok(RawFrame::gray(
                width,
                height,
                frame.get_y_plane().to_vec(),
            ))),
            Err(y4m::Error::EOF) => None,
            Err(e) => Some(Err(Error::Decode {
                path: path.clone(),
                message: format!("frame {index}: {e}"),
            })),
        };
        index += 1;
        if !matches!(out, Some(Ok(_))) {
            done = true;
        }
        out
    });
    Ok(FrameStream::new(native_fps, Box::new(iter)))
}

fn load_raw_yuv(path: &Path, geometry: RawGeometry, native_fps: f64) -> Result<FrameStream> {
    if geometry.width == 0 || geometry.height == 0 {
        return Err(Error::Format("raw-yuv geometry must be non-empty".into()));
    }
    let mut reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let frame_bytes = geometry.frame_bytes();
    let luma = geometry.width * geometry.height;
    let path = path.to_owned();
    let mut index = 0usize;
    let mut done = false;
    let iter = std::iter::from_fn(move || {
        if done {
            return None;
        }
        let mut buf = vec![0u8; frame_bytes];
        let mut filled = 0;
        while filled < frame_bytes {
            match reader.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) => {
                    done = true;
                    return Some(Err(Error::io(&path, e)));
                }
            }
        }
        let out = if filled == 0 {
            done = true;
            None
        } else if filled < frame_bytes {
            done = true;
            Some(Err(Error::Format(format!(
                "{}: frame {index} truncated ({filled} of {frame_bytes} bytes)",
                path.display()
            ))))
        } else {
            buf.truncate(luma);
            Some(Ok(RawFrame::gray(geometry.width, geometry.height, buf)))
        };
        index += 1;
        out
    });
    Ok(FrameStream::new(native_fps, Box::new(iter)))
}

/// Bilinear resize with pixel-center alignment and round-half-up output.
pub fn resize_bilinear(frame: &LumaFrame, width: usize, height: usize) -> LumaFrame {
    let (sw, sh) = (frame.width(), frame.height());
    if (sw, sh) == (width, height) {
        return frame.clone();
    }
    let taps = |dst: usize, src: usize| -> Vec<(usize, usize, f32)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = taps(width, sw);
    let ys = taps(height, sh);
    let src = frame.data();
    // Horizontal pass on the rows we need, then vertical blend.
    let mut rows = vec![0f32; sh * width];
    for y in 0..sh {
        let row = &src[y * sw..(y + 1) * sw];
        let out = &mut rows[y * width..(y + 1) * width];
        for (o, &(x0, x1, fx)) in out.iter_mut().zip(&xs) {
            *o = row[x0] as f32 * (1.0 - fx) + row[x1] as f32 * fx;
        }
    }
    let mut data = Vec::with_capacity(width * height);
    for &(y0, y1, fy) in &ys {
        let (r0, r1) = (&rows[y0 * width..], &rows[y1 * width..]);
        for x in 0..width {
            let v = r0[x] * (1.0 - fy) + r1[x] * fy;
            data.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
    LumaFrame::new(width, height, data).expect("resize produced consistent buffer")
}

/// Index of the source frame nearest to output sample `k`.
#[inline]
fn nearest_source(k: usize, native_fps: f64, target_fps: f64) -> usize {
    (k as f64 * native_fps / target_fps + 0.5).floor() as usize
}

/// Resamples a stream to `target_fps` (nearest timestamp) and `target_size`.
pub fn preprocess(
    stream: FrameStream,
    target_fps: f64,
    target_size: (usize, usize),
) -> Result<FrameSequence> {
    if !(target_fps > 0.0 && target_fps.is_finite()) {
        return Err(Error::Config(format!(
            "target fps must be positive, got {target_fps}"
        )));
    }
    if target_size.0 == 0 || target_size.1 == 0 {
        return Err(Error::Config("target size must be non-empty".into()));
    }
    let native_fps = stream.native_fps();
    let mut out = Vec::new();
    let mut next_k = 0usize;
    let mut count = 0usize;
    let mut last_raw: Option<RawFrame> = None;
    for (j, raw) in stream.enumerate() {
        let raw = raw?;
        count += 1;
        let mut converted: Option<LumaFrame> = None;
        while nearest_source(next_k, native_fps, target_fps) == j {
            if converted.is_none() {
                converted = Some(resize_bilinear(
                    &raw.to_luma()?,
                    target_size.0,
                    target_size.1,
                ));
            }
            out.push(converted.clone().unwrap());
            next_k += 1;
        }
        last_raw = Some(raw);
    }
    if count == 0 {
        return Err(Error::Format("source stream contains no frames".into()));
    }
    let duration = count as f64 / native_fps;
    let expected = ((duration * target_fps - 1e-9).ceil() as usize).max(1);
    out.truncate(expected);
    if out.len() < expected {
        // Trailing samples whose nearest index falls past the end clamp to the last frame.
        let raw = last_raw.expect("non-empty stream");
        let fill = resize_bilinear(&raw.to_luma()?, target_size.0, target_size.1);
        out.resize(expected, fill);
    }
    FrameSequence::new(out, target_fps, duration)
}
