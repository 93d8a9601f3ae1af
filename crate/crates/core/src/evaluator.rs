//! Frame predictions, majority-vote video decisions and evaluation reports.
//!
//! Confusion matrices are oriented rows = true class, columns = predicted
//! class. Metric cells that would be 0/0 are reported as 0 and the class is
//! flagged `degenerate` in the JSON report.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbone::FeatureVector;
use crate::dataset::LabelVocabulary;
use crate::head::{argmax, HeadError, HeadModel};

pub const REPORT_FORMAT: &str = "actionsense-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("feature dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("video {0:?} has no frames")]
    EmptyFrameList(String),
    #[error("class index {index} out of range for {classes} classes")]
    IndexOutOfRange { index: usize, classes: usize },
    #[error("bad report: {0}")]
    Report(String),
    #[error(transparent)]
    Head(#[from] HeadError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub video_id: String,
    pub frame_index: u64,
    pub probabilities: Vec<f64>,
    pub predicted_index: usize,
}

impl FramePrediction {
    pub fn from_probabilities(video_id: impl Into<String>, frame_index: u64, probabilities: Vec<f64>) -> Self {
        Self {
            video_id: video_id.into(),
            frame_index,
            predicted_index: argmax(&probabilities),
            probabilities,
        }
    }
}

/// Predicts one normalized feature vector.
pub fn predict_frame(model: &HeadModel, feature: &FeatureVector) -> Result<FramePrediction> {
    let dim = model.network.input_dim();
    if feature.dim() != dim {
        return Err(EvalError::DimensionMismatch {
            expected: dim,
            actual: feature.dim(),
        });
    }
    let x = Array2::from_shape_vec((1, dim), feature.values.iter().map(|&v| v as f64).collect())
        .expect("length checked");
    let probs = model.network.predict_proba(x.view())?;
    Ok(FramePrediction::from_probabilities(
        feature.video_id.clone(),
        feature.frame_index,
        probs.row(0).to_vec(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDecision {
    pub video_id: String,
    pub predicted_index: usize,
    pub predicted_label: String,
    pub vote_counts: Vec<usize>,
    pub mean_probabilities: Vec<f64>,
    pub tie_broken: bool,
}

/// Majority vote over frame predictions.
///
/// The class with the strictly largest vote count wins. On a count tie the
/// tied class with the highest mean probability wins, then the lowest index.
pub fn decide_video(
    video_id: &str,
    predictions: &[FramePrediction],
    vocabulary: &LabelVocabulary,
) -> Result<VideoDecision> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyFrameList(video_id.to_string()));
    }
    let k = vocabulary.len();
    let mut votes = vec![0usize; k];
    let mut sums = vec![0f64; k];
    for p in predictions {
        if p.probabilities.len() != k || p.predicted_index >= k {
            return Err(EvalError::IndexOutOfRange {
                index: p.predicted_index.max(p.probabilities.len()),
                classes: k,
            });
        }
        votes[p.predicted_index] += 1;
        for (s, v) in sums.iter_mut().zip(&p.probabilities) {
            *s += v;
        }
    }
    let n = predictions.len() as f64;
    let mean: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let top = *votes.iter().max().expect("k >= 2");
    let tied: Vec<usize> = (0..k).filter(|&c| votes[c] == top).collect();
    let winner = if tied.len() == 1 {
        tied[0]
    } else {
        tied.iter()
            .copied()
            .reduce(|best, c| if mean[c] > mean[best] { c } else { best })
            .expect("non-empty")
    };
    Ok(VideoDecision {
        video_id: video_id.to_string(),
        predicted_index: winner,
        predicted_label: vocabulary.labels()[winner].clone(),
        vote_counts: votes,
        mean_probabilities: mean,
        tie_broken: tied.len() > 1,
    })
}

/// Predicts every frame of a video and takes the majority vote.
pub fn classify_video(model: &HeadModel, video_id: &str, frame_features: &[FeatureVector]) -> Result<VideoDecision> {
    if frame_features.is_empty() {
        return Err(EvalError::EmptyFrameList(video_id.to_string()));
    }
    let preds = frame_features
        .iter()
        .map(|f| predict_frame(model, f))
        .collect::<Result<Vec<_>>>()?;
    decide_video(video_id, &preds, &model.vocabulary)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_rows(counts: Vec<Vec<u64>>) -> Self {
        Self { counts }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        self.counts.iter().map(|r| r[k]).sum()
    }
}

pub fn confusion_matrix<I>(decisions: I, k: usize) -> Result<ConfusionMatrix>
where
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut m = ConfusionMatrix::zeros(k);
    for (t, p) in decisions {
        for index in [t, p] {
            if index >= k {
                return Err(EvalError::IndexOutOfRange { index, classes: k });
            }
        }
        m.counts[t][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_class: Vec<Prf>,
    pub macro_avg: Prf,
    /// Classes where at least one metric hit the 0/0 rule.
    pub degenerate: Vec<bool>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn per_class_metrics(confusion: &ConfusionMatrix) -> MetricSummary {
    let k = confusion.classes();
    let mut per_class = Vec::with_capacity(k);
    let mut degenerate = Vec::with_capacity(k);
    for c in 0..k {
        let tp = confusion.counts[c][c];
        let (precision, dp) = ratio(tp, confusion.col_sum(c));
        let (recall, dr) = ratio(tp, confusion.row_sum(c));
        let (f1, df) = if precision + recall > 0.0 {
            (2.0 * precision * recall / (precision + recall), false)
        } else {
            (0.0, true)
        };
        per_class.push(Prf { precision, recall, f1 });
        degenerate.push(dp || dr || df);
    }
    let mean = |f: fn(&Prf) -> f64| {
        if k == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / k as f64
        }
    };
    let macro_avg = Prf {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    MetricSummary {
        per_class,
        macro_avg,
        degenerate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of videos of this class.
    pub support: u64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoOutcome {
    pub true_label: String,
    #[serde(flatten)]
    pub decision: VideoDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format: String,
    pub version: u32,
    /// Backbone the evaluated head was trained on.
    pub model: String,
    pub labels: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassReport>,
    pub macro_avg: Prf,
    pub video_accuracy: f64,
    pub n_videos: u64,
    pub videos: Vec<VideoOutcome>,
}

impl EvaluationReport {
    /// Builds a report from `(true class index, decision)` pairs.
    pub fn from_decisions(
        model: &str,
        vocabulary: &LabelVocabulary,
        outcomes: Vec<(usize, VideoDecision)>,
    ) -> Result<Self> {
        let k = vocabulary.len();
        let confusion = confusion_matrix(outcomes.iter().map(|(t, d)| (*t, d.predicted_index)), k)?;
        let summary = per_class_metrics(&confusion);
        let per_class = (0..k)
            .map(|c| ClassReport {
                label: vocabulary.labels()[c].clone(),
                precision: summary.per_class[c].precision,
                recall: summary.per_class[c].recall,
                f1: summary.per_class[c].f1,
                support: confusion.row_sum(c),
                degenerate: summary.degenerate[c],
            })
            .collect();
        let total = confusion.total();
        let video_accuracy = if total == 0 {
            0.0
        } else {
            confusion.trace() as f64 / total as f64
        };
        let videos = outcomes
            .into_iter()
            .map(|(t, decision)| VideoOutcome {
                true_label: vocabulary.labels()[t].clone(),
                decision,
            })
            .collect();
        Ok(Self {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            model: model.to_string(),
            labels: vocabulary.labels().to_vec(),
            confusion,
            per_class,
            macro_avg: summary.macro_avg,
            video_accuracy,
            n_videos: total,
            videos,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(EvalError::Report(format!(
                "expected {REPORT_FORMAT} version {REPORT_VERSION}, got {} version {}",
                r.format, r.version
            )));
        }
        Ok(r)
    }

    /// Confusion matrix as CSV, first column the true label.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.confusion.counts) {
            out.push_str(label);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format {other:?}; expected text or json")),
        }
    }
}

/// Renders a report.
///
/// The text form has a model-level row with macro precision, F-1 and recall
/// as percentages with one decimal, a per-action block (Action, Precision,
/// F-1 Score, Recall) with two decimals, the video accuracy and the
/// confusion matrix.
pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Text => render_text(report),
    }
}

fn render_text(r: &EvaluationReport) -> String {
    let name_w = r.model.len().max(5) + 2;
    let label_w = r.labels.iter().map(String::len).max().unwrap_or(0).max(6) + 2;
    let mut s = String::new();
    let _ = writeln!(s, "Model performance (macro average, %)");
    let _ = writeln!(s, "{:<name_w$}Precision / F-1 Score / Recall", "Model");
    let _ = writeln!(
        s,
        "{:<name_w$}{:.1} / {:.1} / {:.1}",
        r.model,
        r.macro_avg.precision * 100.0,
        r.macro_avg.f1 * 100.0,
        r.macro_avg.recall * 100.0
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Per-action performance");
    let _ = writeln!(
        s,
        "{:<name_w$}{:<label_w$}{:<11}{:<11}{}",
        "Model", "Action", "Precision", "F-1 Score", "Recall"
    );
    for (i, c) in r.per_class.iter().enumerate() {
        let name = if i == 0 { r.model.as_str() } else { "" };
        let _ = writeln!(
            s,
            "{:<name_w$}{:<label_w$}{:<11.2}{:<11.2}{:.2}",
            name, c.label, c.precision, c.f1, c.recall
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "Video accuracy: {:.1}% ({}/{} videos)",
        r.video_accuracy * 100.0,
        r.confusion.trace(),
        r.n_videos
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Confusion matrix (rows = true, columns = predicted)");
    let col_w = label_w.max(6);
    let _ = write!(s, "{:<label_w$}", "");
    for l in &r.labels {
        let _ = write!(s, "{l:>col_w$}");
    }
    let _ = writeln!(s);
    for (l, row) in r.labels.iter().zip(&r.confusion.counts) {
        let _ = write!(s, "{l:<label_w$}");
        for c in row {
            let _ = write!(s, "{c:>col_w$}");
        }
        let _ = writeln!(s);
    }
    s
}
