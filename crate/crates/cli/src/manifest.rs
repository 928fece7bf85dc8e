//! Batch manifests and per-video loading.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use flowgebd_core::frame_io::{load_frames, preprocess, SourceSpec};
use flowgebd_core::FrameSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    ImageDir,
    Y4m,
    RawYuv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub input: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<InputKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps_native: Option<f64>,
    /// JSON sidecar for raw YUV input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub videos: Vec<VideoEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut m: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for v in &mut m.videos {
            if v.input.is_relative() {
                v.input = base.join(&v.input);
            }
            if let Some(s) = v.sidecar.as_mut().filter(|s| s.is_relative()) {
                *s = base.join(&*s);
            }
        }
        let mut ids: Vec<&str> = m.videos.iter().map(|v| v.video_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            bail!("duplicate video_id {:?} in {}", w[0], path.display());
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn infer_kind(path: &Path) -> InputKind {
    if path.is_dir() {
        InputKind::ImageDir
    } else if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
    {
        InputKind::Y4m
    } else {
        InputKind::RawYuv
    }
}

/// Default id: the directory name or file stem of the input.
pub fn default_video_id(path: &Path) -> String {
    let name = if path.is_dir() {
        path.file_name()
    } else {
        path.file_stem()
    };
    name.map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".to_string())
}

impl VideoEntry {
    pub fn source_spec(&self) -> Result<SourceSpec> {
        let kind = self.kind.unwrap_or_else(|| infer_kind(&self.input));
        let spec = match kind {
            InputKind::ImageDir => {
                let fps = self.fps_native.with_context(|| {
                    format!("{}: image directories need a native fps", self.video_id)
                })?;
                SourceSpec::image_dir(&self.input, fps)
            }
            InputKind::Y4m => SourceSpec::y4m(&self.input),
            InputKind::RawYuv => {
                let sidecar = self
                    .sidecar
                    .clone()
                    .unwrap_or_else(|| self.input.with_extension("json"));
                let mut s = SourceSpec::raw_yuv_with_sidecar(&self.input, &sidecar)?;
                if let Some(fps) = self.fps_native {
                    s.native_fps = Some(fps);
                }
                s
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(&self, target_fps: f64, size: (usize, usize)) -> Result<FrameSequence> {
        let spec = self.source_spec()?;
        let stream = load_frames(&spec)?;
        let seq = preprocess(stream, target_fps, size).with_context(|| {
            format!("{}: preprocessing {}", self.video_id, self.input.display())
        })?;
        Ok(seq)
    }
}
