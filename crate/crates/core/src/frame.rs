//! Grayscale frames and frame sequences at analysis resolution.

use crate::error::{Error, Result};

/// An 8-bit luminance image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LumaFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LumaFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Format(format!(
                "frame buffer has {} samples, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "empty frame");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "empty frame");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn same_size(&self, other: &LumaFrame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Ordered frames sampled at a fixed rate, all sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<LumaFrame>,
    sample_fps: f64,
    source_duration: f64,
}

impl FrameSequence {
    pub fn new(frames: Vec<LumaFrame>, sample_fps: f64, source_duration: f64) -> Result<Self> {
        if !(sample_fps > 0.0 && sample_fps.is_finite()) {
            return Err(Error::Config(format!(
                "sample fps must be positive, got {sample_fps}"
            )));
        }
        if !(source_duration > 0.0 && source_duration.is_finite()) {
            return Err(Error::Config(format!(
                "source duration must be positive, got {source_duration}"
            )));
        }
        if let Some(first) = frames.first() {
            if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| !f.same_size(first)) {
                return Err(Error::Format(format!(
                    "frame {i} is {}x{}, expected {}x{}",
                    f.width(),
                    f.height(),
                    first.width(),
                    first.height()
                )));
            }
        }
        Ok(Self {
            frames,
            sample_fps,
            source_duration,
        })
    }

    /// Sequence whose duration is exactly `frames / fps`.
    pub fn from_frames(frames: Vec<LumaFrame>, sample_fps: f64) -> Result<Self> {
        let duration = frames.len() as f64 / sample_fps;
        Self::new(frames, sample_fps, duration)
    }

    pub fn frames(&self) -> &[LumaFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn sample_fps(&self) -> f64 {
        self.sample_fps
    }

    pub fn duration(&self) -> f64 {
        self.source_duration
    }

    /// Width and height shared by every frame.
    pub fn dimensions(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.width(), f.height()))
    }

    /// First `k` frames, keeping the sample rate.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        let k = k.min(self.frames.len());
        Self::from_frames(self.frames[..k].to_vec(), self.sample_fps)
    }

    pub(crate) fn require_detectable(&self) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::Validation(format!(
                "detection needs at least 2 frames, got {}",
                self.frames.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_buffer_length() {
        assert!(LumaFrame::new(4, 4, vec![0; 15]).is_err());
        assert!(LumaFrame::new(0, 4, vec![]).is_err());
    }

    #[test]
    fn sequence_requires_uniform_geometry() {
        let a = LumaFrame::filled(8, 8, 0);
        let b = LumaFrame::filled(8, 9, 0);
        assert!(FrameSequence::from_frames(vec![a.clone(), b], 4.0).is_err());
        let seq = FrameSequence::from_frames(vec![a.clone(), a], 4.0).unwrap();
        assert_eq!(seq.duration(), 0.5);
        assert_eq!(seq.dimensions(), Some((8, 8)));
    }
}
