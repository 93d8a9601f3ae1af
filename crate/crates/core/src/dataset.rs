//! Labeled-video manifests.
//!
//! A manifest is a JSON-lines file. Line 1 is a header naming the label
//! vocabulary, every following non-blank line describes one video:
//!
//! ```text
//! {"format":"actionsense-manifest","version":1,"labels":["kick","punch","slap"]}
//! {"video_id":"v001","source":"clips/v001","label":"kick","split":"train","fps":30}
//! ```
//!
//! Splitting happens at video granularity, stratified per class.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub const MANIFEST_FORMAT: &str = "actionsense-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Label order used when none is given: kick, punch, slap.
pub const DEFAULT_LABELS: [&str; 3] = ["kick", "punch", "slap"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown label {label:?}; allowed labels: {allowed}")]
    UnknownLabel { label: String, allowed: String },
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("insufficient data: class {label:?} has {available} videos but {required} non-empty splits are requested")]
    InsufficientData {
        label: String,
        available: usize,
        required: usize,
    },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Ordered, unique class names. The position of a label is its class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocabulary {
    labels: Vec<String>,
}

impl LabelVocabulary {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let labels: Vec<String> = labels
            .iter()
            .map(|l| canonical_label(l.as_ref()))
            .collect();
        if labels.len() < 2 {
            return Err(DatasetError::Validation(format!(
                "vocabulary needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.is_empty() {
                return Err(DatasetError::Validation("empty label in vocabulary".into()));
            }
            if !seen.insert(l.as_str()) {
                return Err(DatasetError::Validation(format!(
                    "duplicate label {l:?} in vocabulary"
                )));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        let canon = canonical_label(label);
        self.labels
            .iter()
            .position(|l| *l == canon)
            .ok_or_else(|| DatasetError::UnknownLabel {
                label: label.to_string(),
                allowed: self.labels.join(", "),
            })
    }
}

impl Default for LabelVocabulary {
    fn default() -> Self {
        Self::new(&DEFAULT_LABELS).expect("default vocabulary is valid")
    }
}

impl TryFrom<Vec<String>> for LabelVocabulary {
    type Error = DatasetError;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::new(&labels)
    }
}

impl From<LabelVocabulary> for Vec<String> {
    fn from(v: LabelVocabulary) -> Self {
        v.labels
    }
}

fn canonical_label(label: &str) -> String {
    label.trim().to_lowercase()
}

/// One-hot encoding of `label` under `vocabulary`.
pub fn one_hot(label: &str, vocabulary: &LabelVocabulary) -> Result<Vec<f64>> {
    let index = vocabulary.index_of(label)?;
    Ok(one_hot_index(index, vocabulary.len()))
}

pub fn one_hot_index(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub source: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "is_unassigned")]
    pub split: Split,
    #[serde(default, rename = "fps", skip_serializing_if = "Option::is_none")]
    pub fps_hint: Option<u32>,
    #[serde(default, rename = "duration_s", skip_serializing_if = "Option::is_none")]
    pub duration_hint: Option<f64>,
}

fn is_unassigned(s: &Split) -> bool {
    *s == Split::Unassigned
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader {
    format: String,
    version: u32,
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratios: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub vocabulary: LabelVocabulary,
    pub records: Vec<VideoRecord>,
    /// Seed of the last split; 0 when never split.
    pub seed: u64,
    /// Ratios of the last split, if any.
    pub ratios: Option<SplitRatios>,
    /// Directory relative `source` entries resolve against.
    pub base_dir: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn new(vocabulary: LabelVocabulary, records: Vec<VideoRecord>) -> Result<Self> {
        let mut m = Self {
            vocabulary,
            records,
            seed: 0,
            ratios: None,
            base_dir: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&mut self) -> Result<()> {
        let mut ids = HashSet::new();
        for r in &mut self.records {
            if r.video_id.is_empty() {
                return Err(DatasetError::Validation("empty video_id".into()));
            }
            if !ids.insert(r.video_id.clone()) {
                return Err(DatasetError::Validation(format!(
                    "duplicate video_id {:?}",
                    r.video_id
                )));
            }
            let index = self.vocabulary.index_of(&r.label)?;
            r.label = self.vocabulary.labels[index].clone();
            if r.fps_hint == Some(0) {
                return Err(DatasetError::Validation(format!(
                    "video {:?}: fps must be positive",
                    r.video_id
                )));
            }
            if let Some(d) = r.duration_hint {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(DatasetError::Validation(format!(
                        "video {:?}: duration_s must be positive",
                        r.video_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn label_index(&self, record: &VideoRecord) -> usize {
        self.vocabulary
            .index_of(&record.label)
            .expect("records are validated against the vocabulary")
    }

    /// True when every record carries a split.
    pub fn is_split(&self) -> bool {
        self.records.iter().all(|r| r.split != Split::Unassigned)
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &VideoRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn source_path(&self, record: &VideoRecord) -> PathBuf {
        let p = Path::new(&record.source);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Serializes the manifest in its JSON-lines form.
    pub fn to_jsonl(&self) -> String {
        let header = ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            labels: self.vocabulary.labels.clone(),
            seed: self.ratios.map(|_| self.seed),
            ratios: self.ratios.map(|r| r.0),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }
}

/// Parses manifest text. Line numbers in errors are 1-based.
pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, htext) = lines.next().ok_or(DatasetError::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    let header: ManifestHeader = serde_json::from_str(htext).map_err(|e| DatasetError::Parse {
        line: hline,
        message: format!("bad header: {e}"),
    })?;
    if header.format != MANIFEST_FORMAT {
        return Err(DatasetError::Parse {
            line: hline,
            message: format!("format must be {MANIFEST_FORMAT:?}, got {:?}", header.format),
        });
    }
    if header.version != MANIFEST_VERSION {
        return Err(DatasetError::Parse {
            line: hline,
            message: format!("unsupported manifest version {}", header.version),
        });
    }
    let vocabulary = LabelVocabulary::new(&header.labels)?;

    let mut records = Vec::new();
    for (line, row) in lines {
        let rec: VideoRecord = serde_json::from_str(row).map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    let mut m = DatasetManifest::new(vocabulary, records)?;
    if let Some(r) = header.ratios {
        m.ratios = Some(SplitRatios::new(r[0], r[1], r[2])?);
        m.seed = header.seed.unwrap_or(0);
    }
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut m = parse_manifest(&text)?;
    m.base_dir = path.parent().map(Path::to_path_buf);
    Ok(m)
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios(pub [f64; 3]);

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = [train, val, test];
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(DatasetError::InvalidRatios(format!(
                "ratios must be non-negative, got {r:?}"
            )));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidRatios(format!(
                "ratios must sum to 1, got {sum}"
            )));
        }
        Ok(Self(r))
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self([0.70, 0.15, 0.15])
    }
}

impl std::str::FromStr for SplitRatios {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| DatasetError::InvalidRatios(format!("{s:?}: {e}")))?;
        match parts.as_slice() {
            [a, b, c] => Self::new(*a, *b, *c),
            _ => Err(DatasetError::InvalidRatios(format!(
                "expected three comma-separated fractions, got {s:?}"
            ))),
        }
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`.
///
/// Remainder ties go to the lower bucket index. Afterwards every bucket with a
/// non-zero ratio is topped up to at least one item (taking from the largest
/// bucket) when `n` is large enough.
pub fn apportion(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.0.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = (q + 1e-9).floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    // stable sort keeps lower index first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }

    let wanted: Vec<usize> = (0..3).filter(|&i| ratios.0[i] > 0.0).collect();
    if n >= wanted.len() {
        for &i in &wanted {
            if counts[i] == 0 {
                let donor = (0..3)
                    .filter(|&j| counts[j] > 1)
                    .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
                    .expect("n >= non-zero buckets leaves a donor");
                counts[donor] -= 1;
                counts[i] += 1;
            }
        }
    }
    counts
}

/// Assigns every record to train/val/test, stratified per class.
///
/// Records of each class are sorted by `video_id`, shuffled with a seed
/// derived from `(seed, class index)`, then cut according to
/// [`apportion`]. The result depends only on the set of records, the ratios
/// and the seed; the input record order is preserved in the output.
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetManifest> {
    let nonzero = ratios.0.iter().filter(|r| **r > 0.0).count();
    let mut by_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for k in 0..manifest.vocabulary.len() {
        by_class.insert(k, Vec::new());
    }
    for r in &manifest.records {
        by_class
            .get_mut(&manifest.label_index(r))
            .expect("class present")
            .push(&r.video_id);
    }

    let mut assignment: BTreeMap<&str, Split> = BTreeMap::new();
    for (class, mut ids) in by_class {
        if ids.len() < nonzero {
            return Err(DatasetError::InsufficientData {
                label: manifest.vocabulary.labels[class].clone(),
                available: ids.len(),
                required: nonzero,
            });
        }
        ids.sort_unstable();
        let mut rng = seed::rng_for(seed, class as u64);
        ids.shuffle(&mut rng);
        let counts = apportion(ids.len(), &ratios);
        let mut it = ids.into_iter();
        for (split, count) in Split::ASSIGNED.iter().zip(counts) {
            for id in it.by_ref().take(count) {
                assignment.insert(id, *split);
            }
        }
    }

    let mut out = manifest.clone();
    for r in &mut out.records {
        r.split = assignment[r.video_id.as_str()];
    }
    out.seed = seed;
    out.ratios = Some(ratios);
    Ok(out)
}
