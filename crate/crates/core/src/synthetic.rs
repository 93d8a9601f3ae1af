//! Generated fixtures: color-pattern clips and Gaussian feature blobs.
//!
//! Clip classes are told apart by a dominant color and a spatial pattern
//! (kick: red horizontal bands, punch: green vertical bands, slap: blue
//! checkerboard). Every clip gets its own phase, band width and pixel noise
//! so no two clips are identical.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::backbone::FeatureVector;
use crate::dataset::{DatasetManifest, DatasetError, LabelVocabulary, VideoRecord};
use crate::frames::RawFrame;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipSpec {
    pub clips_per_class: usize,
    pub seconds: u32,
    pub fps: u32,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for ClipSpec {
    fn default() -> Self {
        Self {
            clips_per_class: 10,
            seconds: 3,
            fps: 30,
            width: 160,
            height: 120,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PatternParams {
    period: usize,
    phase: usize,
    drift: usize,
    noise: f64,
}

/// Renders frame `t` of a clip of class `class` (0, 1 or 2; larger values
/// wrap around).
fn render(class: usize, p: PatternParams, t: usize, w: usize, h: usize, rng: &mut impl Rng) -> RawFrame {
    let noise = Normal::new(0.0, p.noise).expect("finite sigma");
    let dominant = class % 3;
    let mut data = Vec::with_capacity(w * h * 3);
    let shift = p.phase + p.drift * t;
    for y in 0..h {
        for x in 0..w {
            let on = match dominant {
                0 => ((y + shift) / p.period) % 2 == 0,
                1 => ((x + shift) / p.period) % 2 == 0,
                _ => (((x + shift) / p.period) + (y / p.period)) % 2 == 0,
            };
            let mut px = if on { [60.0, 60.0, 60.0] } else { [25.0, 25.0, 25.0] };
            px[dominant] = if on { 230.0 } else { 150.0 };
            for v in &mut px {
                let n: f64 = noise.sample(rng);
                data.push((*v + n).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RawFrame::new(w, h, data, t as u64).expect("buffer sized for frame")
}

/// Frames of one clip, in order.
pub fn clip_frames(class: usize, clip: usize, spec: &ClipSpec) -> Vec<RawFrame> {
    let mut rng = rng_for(spec.seed, (class as u64) << 32 | clip as u64);
    let period = rng.random_range(8..20);
    let params = PatternParams {
        period,
        phase: rng.random_range(0..period * 2),
        drift: rng.random_range(0..3),
        noise: 12.0,
    };
    let n = (spec.seconds * spec.fps) as usize;
    (0..n)
        .map(|t| render(class, params, t, spec.width, spec.height, &mut rng))
        .collect()
}

fn save_frames(frames: &[RawFrame], dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for f in frames {
        let path = dir.join(format!("frame_{:05}.png", f.frame_index));
        image::save_buffer(
            &path,
            f.data(),
            f.width() as u32,
            f.height() as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| DatasetError::Validation(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Writes `clips/<label>_<nn>/frame_*.png` under `root` plus an unsplit
/// `manifest.jsonl`, and returns the manifest path.
pub fn write_clip_dataset(root: &Path, spec: &ClipSpec) -> Result<PathBuf, DatasetError> {
    let vocabulary = LabelVocabulary::default();
    let mut records = Vec::new();
    for (class, label) in vocabulary.labels().iter().enumerate() {
        for clip in 0..spec.clips_per_class {
            let id = format!("{label}_{clip:02}");
            let rel = format!("clips/{id}");
            save_frames(&clip_frames(class, clip, spec), &root.join(&rel))?;
            records.push(VideoRecord {
                video_id: id,
                source: rel,
                label: label.clone(),
                split: Default::default(),
                fps_hint: Some(spec.fps),
                duration_hint: Some(spec.seconds as f64),
            });
        }
    }
    let manifest = DatasetManifest::new(vocabulary, records)?;
    let path = root.join("manifest.jsonl");
    manifest.save(&path)?;
    Ok(path)
}

/// Isotropic Gaussian blobs, one per class, with unit variance.
///
/// Class `k` is centered at `separation / sqrt(2)` along axis `k`, so every
/// pair of class means is exactly `separation` apart. Samples are assigned
/// to classes round-robin.
pub fn gaussian_blobs(n: usize, dim: usize, classes: usize, separation: f64, seed: u64) -> Vec<FeatureVector> {
    assert!(classes <= dim, "need one axis per class");
    let mut rng = rng_for(seed, 0);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let offset = separation / std::f64::consts::SQRT_2;
    (0..n)
        .map(|i| {
            let k = i % classes;
            let values = (0..dim)
                .map(|d| {
                    let mean = if d == k { offset } else { 0.0 };
                    (mean + unit.sample(&mut rng)) as f32
                })
                .collect();
            FeatureVector {
                values,
                video_id: format!("blob_{i:04}"),
                frame_index: 0,
                label_index: Some(k),
            }
        })
        .collect()
}
