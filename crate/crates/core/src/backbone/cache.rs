//! On-disk feature cache.
//!
//! A cache directory holds two files:
//!
//! - `features.afv`: magic `AFV1`, then little-endian `u32` version (1),
//!   `u32` rows, `u32` cols, then `rows * cols` little-endian `f32`.
//! - `index.jsonl`: a header line naming the backbone and preprocessing that
//!   produced the features, then one line per matrix row with `row`,
//!   `video_id`, `frame_index`, `label_index` and `split`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::FeatureVector;
use crate::dataset::Split;

pub const MATRIX_MAGIC: &[u8; 4] = b"AFV1";
pub const MATRIX_VERSION: u32 = 1;
pub const FEATURES_FILE: &str = "features.afv";
pub const INDEX_FILE: &str = "index.jsonl";
const INDEX_FORMAT: &str = "actionsense-feature-index";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad feature cache {path}: {message}")]
    Format { path: PathBuf, message: String },
}

type Result<T> = std::result::Result<T, CacheError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> CacheError {
    CacheError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes a row-major f32 matrix in the `AFV1` format.
pub fn write_matrix(path: &Path, rows: usize, cols: usize, data: &[f32]) -> Result<()> {
    if data.len() != rows * cols {
        return Err(format_err(
            path,
            format!("{rows}x{cols} matrix needs {} values, got {}", rows * cols, data.len()),
        ));
    }
    let mut buf = Vec::with_capacity(16 + data.len() * 4);
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &buf)
}

/// Reads an `AFV1` matrix, returning `(rows, cols, data)`.
pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 16 || &bytes[..4] != MATRIX_MAGIC {
        return Err(format_err(path, "missing AFV1 magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != MATRIX_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    let expected = 16 + rows * cols * 4;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!("expected {expected} bytes for {rows}x{cols}, found {}", bytes.len()),
        ));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((rows, cols, data))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    backbone: String,
    preprocessing: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub row: usize,
    pub video_id: String,
    pub frame_index: u64,
    pub label_index: Option<usize>,
    pub split: Split,
}

/// A feature together with the split of the video it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedFeature {
    pub feature: FeatureVector,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub backbone: String,
    pub preprocessing: String,
    pub dim: usize,
    pub entries: Vec<TaggedFeature>,
}

impl FeatureCache {
    pub fn new(backbone: impl Into<String>, preprocessing: impl Into<String>, dim: usize) -> Self {
        Self {
            backbone: backbone.into(),
            preprocessing: preprocessing.into(),
            dim,
            entries: Vec::new(),
        }
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(FEATURES_FILE).is_file() && dir.join(INDEX_FILE).is_file()
    }

    /// Whether the cache was produced by the given backbone configuration.
    pub fn matches(&self, backbone: &str, preprocessing: &str) -> bool {
        self.backbone == backbone && self.preprocessing == preprocessing
    }

    pub fn has_video(&self, video_id: &str) -> bool {
        self.entries.iter().any(|e| e.feature.video_id == video_id)
    }

    /// Features of one video, in frame order.
    pub fn video(&self, video_id: &str) -> Vec<&TaggedFeature> {
        let mut v: Vec<&TaggedFeature> = self
            .entries
            .iter()
            .filter(|e| e.feature.video_id == video_id)
            .collect();
        v.sort_by_key(|e| e.feature.frame_index);
        v
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &TaggedFeature> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Sorts rows by `(video_id, frame_index)` so the on-disk layout does
    /// not depend on extraction order.
    pub fn canonicalize(&mut self) {
        self.entries.sort_by(|a, b| {
            (a.feature.video_id.as_str(), a.feature.frame_index)
                .cmp(&(b.feature.video_id.as_str(), b.feature.frame_index))
        });
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut data = Vec::with_capacity(self.entries.len() * self.dim);
        for e in &self.entries {
            if e.feature.dim() != self.dim {
                return Err(format_err(
                    dir,
                    format!(
                        "row for {} frame {} has {} values, cache dim is {}",
                        e.feature.video_id,
                        e.feature.frame_index,
                        e.feature.dim(),
                        self.dim
                    ),
                ));
            }
            data.extend_from_slice(&e.feature.values);
        }
        write_matrix(&dir.join(FEATURES_FILE), self.entries.len(), self.dim, &data)?;

        let header = IndexHeader {
            format: INDEX_FORMAT.into(),
            version: 1,
            backbone: self.backbone.clone(),
            preprocessing: self.preprocessing.clone(),
        };
        let mut text = serde_json::to_string(&header).expect("header serializes");
        text.push('\n');
        for (row, e) in self.entries.iter().enumerate() {
            let r = IndexRow {
                row,
                video_id: e.feature.video_id.clone(),
                frame_index: e.feature.frame_index,
                label_index: e.feature.label_index,
                split: e.split,
            };
            text.push_str(&serde_json::to_string(&r).expect("row serializes"));
            text.push('\n');
        }
        write_atomic(&dir.join(INDEX_FILE), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(FEATURES_FILE);
        let ipath = dir.join(INDEX_FILE);
        let (rows, cols, data) = read_matrix(&mpath)?;
        let text = fs::read_to_string(&ipath).map_err(io_err(&ipath))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: IndexHeader = lines
            .next()
            .ok_or_else(|| format_err(&ipath, "missing header"))
            .and_then(|l| {
                serde_json::from_str(l).map_err(|e| format_err(&ipath, format!("header: {e}")))
            })?;
        if header.format != INDEX_FORMAT || header.version != 1 {
            return Err(format_err(&ipath, "not a version 1 feature index"));
        }
        let mut entries = Vec::with_capacity(rows);
        for (i, line) in lines.enumerate() {
            let r: IndexRow = serde_json::from_str(line)
                .map_err(|e| format_err(&ipath, format!("row {i}: {e}")))?;
            if r.row != i || i >= rows {
                return Err(format_err(&ipath, format!("row {i} out of sequence")));
            }
            entries.push(TaggedFeature {
                feature: FeatureVector {
                    values: data[i * cols..(i + 1) * cols].to_vec(),
                    video_id: r.video_id,
                    frame_index: r.frame_index,
                    label_index: r.label_index,
                },
                split: r.split,
            });
        }
        if entries.len() != rows {
            return Err(format_err(
                &ipath,
                format!("index has {} rows, matrix has {rows}", entries.len()),
            ));
        }
        Ok(Self {
            backbone: header.backbone,
            preprocessing: header.preprocessing,
            dim: cols,
            entries,
        })
    }
}
