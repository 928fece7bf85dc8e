//! F1 at relative-distance thresholds.
//!
//! A prediction matches a ground-truth boundary at threshold `tau` when
//! `|pred - gt| / duration < tau`. Matching is one-to-one and greedy by
//! ascending distance (ties: earlier ground truth, then earlier prediction).
//! Dataset scores are micro-averaged over summed counts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refine::Prediction;

/// Largest relative duration mismatch tolerated between a prediction file and
/// its annotation.
pub const DURATION_TOLERANCE: f64 = 0.02;

/// The ten thresholds 0.05, 0.10, ..., 0.50.
pub fn default_taus() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub duration_s: f64,
    pub annotators: Vec<Vec<f64>>,
}

impl VideoAnnotation {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            out.push(format!("{}: duration must be positive", self.video_id));
        }
        if self.annotators.is_empty() {
            out.push(format!("{}: no annotators", self.video_id));
        }
        for (a, list) in self.annotators.iter().enumerate() {
            for &t in list {
                if !(t > 0.0 && t < self.duration_s) {
                    out.push(format!(
                        "{}: annotator {a} boundary {t} outside (0, {})",
                        self.video_id, self.duration_s
                    ));
                }
            }
            if list.windows(2).any(|w| w[0] > w[1]) {
                out.push(format!(
                    "{}: annotator {a} boundaries not sorted",
                    self.video_id
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub videos: Vec<VideoAnnotation>,
}

impl AnnotationFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: AnnotationFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        let problems: Vec<String> = file.videos.iter().flat_map(|v| v.violations()).collect();
        if !problems.is_empty() {
            return Err(Error::parse(path, problems.join("; ")));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("annotations serialize");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Greedy one-to-one matching; returns `(pred_index, gt_index)` pairs.
pub fn match_boundaries(
    preds: &[f64],
    gts: &[f64],
    duration_s: f64,
    tau: f64,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (p, &tp) in preds.iter().enumerate() {
        for (g, &tg) in gts.iter().enumerate() {
            let dist = (tp - tg).abs();
            if dist / duration_s < tau {
                pairs.push((dist, g, p));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut out = Vec::new();
    for (_, g, p) in pairs {
        if !pred_used[p] && !gt_used[g] {
            pred_used[p] = true;
            gt_used[g] = true;
            out.push((p, g));
        }
    }
    out
}

/// Match totals; fractional under mean-annotator aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub matched: f64,
    pub predicted: f64,
    pub ground_truth: f64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        if self.predicted > 0.0 {
            self.matched / self.predicted
        } else {
            0.0
        }
    }

    pub fn recall(&self) -> f64 {
        if self.ground_truth > 0.0 {
            self.matched / self.ground_truth
        } else {
            0.0
        }
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    fn add(&mut self, other: &Counts) {
        self.matched += other.matched;
        self.predicted += other.predicted;
        self.ground_truth += other.ground_truth;
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorMode {
    /// Score against the annotator giving the best F1.
    #[default]
    Max,
    /// Average scores (and counts) over annotators.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauScore {
    pub tau: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
}

pub fn score_counts(preds: &[f64], gts: &[f64], duration_s: f64, tau: f64) -> Counts {
    Counts {
        matched: match_boundaries(preds, gts, duration_s, tau).len() as f64,
        predicted: preds.len() as f64,
        ground_truth: gts.len() as f64,
    }
}

/// Per-threshold scores of one video against all of its annotators.
pub fn score_video(
    preds: &[f64],
    pred_duration: Option<f64>,
    ann: &VideoAnnotation,
    taus: &[f64],
    mode: AnnotatorMode,
) -> Result<Vec<TauScore>> {
    if let Some(d) = pred_duration {
        if (d - ann.duration_s).abs() > DURATION_TOLERANCE * ann.duration_s {
            return Err(Error::Validation(format!(
                "{}: prediction duration {d} s differs from annotation {} s by more than 2%",
                ann.video_id, ann.duration_s
            )));
        }
    }
    if ann.annotators.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no annotators",
            ann.video_id
        )));
    }
    Ok(taus
        .iter()
        .map(|&tau| {
            let per: Vec<Counts> = ann
                .annotators
                .iter()
                .map(|gts| score_counts(preds, gts, ann.duration_s, tau))
                .collect();
            match mode {
                AnnotatorMode::Max => {
                    // first annotator wins ties
                    let best = per
                        .iter()
                        .copied()
                        .reduce(|a, b| if b.f1() > a.f1() { b } else { a })
                        .unwrap();
                    TauScore {
                        tau,
                        precision: best.precision(),
                        recall: best.recall(),
                        f1: best.f1(),
                        counts: best,
                    }
                }
                AnnotatorMode::Mean => {
                    let n = per.len() as f64;
                    let mean = |f: fn(&Counts) -> f64| per.iter().map(f).sum::<f64>() / n;
                    TauScore {
                        tau,
                        precision: mean(Counts::precision),
                        recall: mean(Counts::recall),
                        f1: mean(Counts::f1),
                        counts: Counts {
                            matched: mean(|c| c.matched),
                            predicted: mean(|c| c.predicted),
                            ground_truth: mean(|c| c.ground_truth),
                        },
                    }
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoScores {
    pub video_id: String,
    /// False when no prediction file was found (scored as empty).
    pub has_prediction: bool,
    pub scores: Vec<TauScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub annotator_mode: AnnotatorMode,
    pub taus: Vec<f64>,
    pub scores: Vec<TauScore>,
    pub avg_f1: f64,
    pub videos: Vec<VideoScores>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn f1_at(&self, tau: f64) -> Option<f64> {
        self.scores
            .iter()
            .find(|s| (s.tau - tau).abs() < 1e-9)
            .map(|s| s.f1)
    }

    /// Table layout: one row per metric, one column per threshold plus `avg`.
    pub fn to_csv(&self) -> String {
        type Metric = fn(&TauScore) -> f64;
        let mut out = String::from("metric");
        for t in &self.taus {
            out.push_str(&format!(",tau_{t:.2}"));
        }
        out.push_str(",avg\n");
        let rows: [(&str, Metric); 3] = [
            ("precision", |s| s.precision),
            ("recall", |s| s.recall),
            ("f1", |s| s.f1),
        ];
        for (name, get) in rows {
            out.push_str(name);
            let vals: Vec<f64> = self.scores.iter().map(get).collect();
            for v in &vals {
                out.push_str(&format!(",{v:.6}"));
            }
            let avg = if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            out.push_str(&format!(",{avg:.6}\n"));
        }
        out
    }

    pub fn per_video_csv(&self) -> String {
        let mut out =
            String::from("video_id,tau,matched,predicted,ground_truth,precision,recall,f1\n");
        for v in &self.videos {
            for s in &v.scores {
                out.push_str(&format!(
                    "{},{:.2},{},{},{},{:.6},{:.6},{:.6}\n",
                    v.video_id,
                    s.tau,
                    s.counts.matched,
                    s.counts.predicted,
                    s.counts.ground_truth,
                    s.precision,
                    s.recall,
                    s.f1
                ));
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write(
            "report.json",
            serde_json::to_string_pretty(self).expect("report serializes") + "\n",
        )?;
        write("report.csv", self.to_csv())?;
        write("per_video.csv", self.per_video_csv())
    }
}

/// Predictions keyed by video id: `(boundaries, reported duration)`.
pub type PredictionMap = BTreeMap<String, (Vec<f64>, Option<f64>)>;

/// Scores a dataset from in-memory predictions. Videos without a prediction
/// are scored as empty and reported in `warnings`.
pub fn evaluate(
    preds: &PredictionMap,
    annotations: &AnnotationFile,
    taus: &[f64],
    mode: AnnotatorMode,
) -> Result<EvalReport> {
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Config(
            "thresholds must be positive and non-empty".into(),
        ));
    }
    let mut totals = vec![Counts::default(); taus.len()];
    let mut videos = Vec::with_capacity(annotations.videos.len());
    let mut warnings = Vec::new();
    for ann in &annotations.videos {
        let (boundaries, duration, has_prediction) = match preds.get(&ann.video_id) {
            Some((b, d)) => (b.as_slice(), *d, true),
            None => {
                warnings.push(format!("{}: no prediction, scored as empty", ann.video_id));
                (&[][..], None, false)
            }
        };
        let scores = score_video(boundaries, duration, ann, taus, mode)?;
        for (t, s) in totals.iter_mut().zip(&scores) {
            t.add(&s.counts);
        }
        videos.push(VideoScores {
            video_id: ann.video_id.clone(),
            has_prediction,
            scores,
        });
    }
    let scores: Vec<TauScore> = taus
        .iter()
        .zip(&totals)
        .map(|(&tau, c)| TauScore {
            tau,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            counts: *c,
        })
        .collect();
    let avg_f1 = scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64;
    Ok(EvalReport {
        annotator_mode: mode,
        taus: taus.to_vec(),
        scores,
        avg_f1,
        videos,
        warnings,
    })
}

/// Reads `<video_id>.json` prediction files for every annotated video.
pub fn load_predictions(pred_dir: &Path, annotations: &AnnotationFile) -> Result<PredictionMap> {
    let mut out = PredictionMap::new();
    for ann in &annotations.videos {
        let path: PathBuf = pred_dir.join(format!("{}.json", ann.video_id));
        if !path.exists() {
            continue;
        }
        let p = Prediction::load(&path)?;
        out.insert(ann.video_id.clone(), (p.boundaries_s, Some(p.duration_s)));
    }
    Ok(out)
}

pub fn evaluate_dataset(
    pred_dir: &Path,
    annot_file: &Path,
    taus: &[f64],
    mode: AnnotatorMode,
) -> Result<EvalReport> {
    let annotations = AnnotationFile::load(annot_file)?;
    let preds = load_predictions(pred_dir, &annotations)?;
    let report = evaluate(&preds, &annotations, taus, mode)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}
