//! Frozen feature extractors and feature normalization.
//!
//! A [`Backbone`] maps a [`FrameTensor`] to a flat [`FeatureVector`] of
//! length `H * W * C`, flattened row-major in (H, W, C) order. Two engines
//! exist: the built-in `stub` (7x7 grid mean pooling, no model file) and
//! ONNX models executed with tract.

mod cache;
mod normalize;
mod onnx;
mod registry;
mod stub;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{FrameTensor, CHANNELS, INPUT_SIZE};

pub use cache::{
    read_matrix, write_matrix, CacheError, FeatureCache, IndexRow, TaggedFeature, FEATURES_FILE,
    INDEX_FILE, MATRIX_MAGIC, MATRIX_VERSION,
};
pub use normalize::{apply_feature_normalizer, fit_feature_normalizer, NormStats};
pub use registry::{BackboneRegistry, RegistryEntry};
pub use stub::{block_mean_features, STUB_GRID, STUB_NAME};

#[derive(Debug, Error)]
pub enum BackboneError {
    #[error("cannot load backbone {name:?}: {message}")]
    ModelLoad { name: String, message: String },
    #[error("backbone {name:?}: declared output shape {declared:?} (flat length {declared_len}) does not match model output {actual:?} (flat length {actual_len})")]
    ShapeMismatch {
        name: String,
        declared: [usize; 3],
        declared_len: usize,
        actual: Vec<usize>,
        actual_len: usize,
    },
    #[error("inference failed in backbone {name:?}: {message}")]
    Inference { name: String, message: String },
    #[error("feature set is empty")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unknown backbone {0:?}")]
    UnknownBackbone(String),
    #[error("registry {path}: {message}")]
    Registry { path: PathBuf, message: String },
    #[error("non-finite feature value in {video_id} frame {frame_index}")]
    NonFinite { video_id: String, frame_index: u64 },
}

pub type Result<T> = std::result::Result<T, BackboneError>;

/// Memory layout of the model's input and output tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// (1, 224, 224, 3) in, (1, H, W, C) out.
    #[default]
    Nhwc,
    /// (1, 3, 224, 224) in, (1, C, H, W) out.
    Nchw,
}

/// Per-backbone input scaling applied to [0, 1] frame values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    /// Values are used as-is.
    #[default]
    UnitInterval,
    /// `2x - 1`, mapping to [-1, 1].
    SymmetricUnitInterval,
    /// `(x - mean[c]) / std[c]` per channel.
    Custom { mean: [f32; 3], std: [f32; 3] },
}

impl Preprocessing {
    pub fn apply(&self, values: &[f32]) -> Vec<f32> {
        match self {
            Preprocessing::UnitInterval => values.to_vec(),
            Preprocessing::SymmetricUnitInterval => values.iter().map(|v| v * 2.0 - 1.0).collect(),
            Preprocessing::Custom { mean, std } => values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let c = i % CHANNELS;
                    (v - mean[c]) / std[c]
                })
                .collect(),
        }
    }
}

impl fmt::Display for Preprocessing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preprocessing::UnitInterval => f.write_str("unit_interval"),
            Preprocessing::SymmetricUnitInterval => f.write_str("symmetric_unit_interval"),
            Preprocessing::Custom { mean, std } => write!(f, "custom(mean={mean:?},std={std:?})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub name: String,
    pub model_path: Option<PathBuf>,
    pub layout: Layout,
    /// `None` takes the shape from the loaded model.
    pub declared_output_shape: Option<[usize; 3]>,
    pub preprocessing: Preprocessing,
}

impl BackboneSpec {
    pub const INPUT_SHAPE: [usize; 3] = [INPUT_SIZE, INPUT_SIZE, CHANNELS];

    pub fn new(name: impl Into<String>, declared_output_shape: Option<[usize; 3]>) -> Self {
        Self {
            name: name.into(),
            model_path: None,
            layout: Layout::Nhwc,
            declared_output_shape,
            preprocessing: Preprocessing::UnitInterval,
        }
    }

    pub fn stub() -> Self {
        Self::new(STUB_NAME, Some([STUB_GRID, STUB_GRID, CHANNELS]))
    }

    pub fn with_model(mut self, path: impl Into<PathBuf>) -> Self {
        self.model_path = Some(path.into());
        self
    }

    pub fn with_layout(mut self, layout: Layout) -> Self {
        self.layout = layout;
        self
    }

    /// Product of the declared output shape.
    pub fn declared_len(&self) -> Option<usize> {
        self.declared_output_shape.map(|s| s.iter().product())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub video_id: String,
    pub frame_index: u64,
    pub label_index: Option<usize>,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self {
            values,
            video_id: String::new(),
            frame_index: 0,
            label_index: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

enum Engine {
    Stub,
    Onnx(onnx::OnnxEngine),
}

/// An inference-ready feature extractor. Safe to share across threads.
pub struct Backbone {
    spec: BackboneSpec,
    output_shape: [usize; 3],
    engine: Engine,
}

impl fmt::Debug for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backbone")
            .field("name", &self.spec.name)
            .field("output_shape", &self.output_shape)
            .finish()
    }
}

impl Backbone {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    /// (H, W, C) of the feature map.
    pub fn output_shape(&self) -> [usize; 3] {
        self.output_shape
    }

    pub fn flat_len(&self) -> usize {
        self.output_shape.iter().product()
    }

    /// Identity of the preprocessing, used as part of the feature cache key.
    pub fn preprocessing_key(&self) -> String {
        self.spec.preprocessing.to_string()
    }
}

/// Loads the backbone described by `spec` and checks its output shape.
pub fn load_backbone(spec: &BackboneSpec) -> Result<Backbone> {
    let (engine, actual): (Engine, Vec<usize>) = if spec.name == STUB_NAME {
        (Engine::Stub, vec![STUB_GRID, STUB_GRID, CHANNELS])
    } else {
        let path = spec.model_path.as_ref().ok_or_else(|| BackboneError::ModelLoad {
            name: spec.name.clone(),
            message: "no model_path configured".into(),
        })?;
        let engine = onnx::OnnxEngine::load(&spec.name, path, spec.layout)?;
        let shape = engine.output_shape().to_vec();
        (Engine::Onnx(engine), shape)
    };
    let actual_len: usize = actual.iter().product();
    let output_shape = match spec.declared_output_shape {
        Some(declared) => {
            let declared_len: usize = declared.iter().product();
            if declared_len != actual_len || actual.as_slice() != declared {
                return Err(BackboneError::ShapeMismatch {
                    name: spec.name.clone(),
                    declared,
                    declared_len,
                    actual,
                    actual_len,
                });
            }
            declared
        }
        None => [actual[0], actual[1], actual[2]],
    };
    Ok(Backbone {
        spec: spec.clone(),
        output_shape,
        engine,
    })
}

/// Runs the backbone on one frame.
pub fn extract_features(backbone: &Backbone, frame: &FrameTensor) -> Result<FeatureVector> {
    let input = backbone.spec.preprocessing.apply(frame.values());
    let values = match &backbone.engine {
        Engine::Stub => block_mean_features(&input),
        Engine::Onnx(engine) => engine.run(&input)?,
    };
    if values.len() != backbone.flat_len() {
        return Err(BackboneError::Inference {
            name: backbone.spec.name.clone(),
            message: format!(
                "model produced {} values, expected {}",
                values.len(),
                backbone.flat_len()
            ),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(BackboneError::NonFinite {
            video_id: frame.video_id.clone(),
            frame_index: frame.frame_index,
        });
    }
    Ok(FeatureVector {
        values,
        video_id: frame.video_id.clone(),
        frame_index: frame.frame_index,
        label_index: None,
    })
}

/// Row-major flat index of `(h, w, c)` in a feature map of shape `shape`.
pub fn flat_index(shape: [usize; 3], h: usize, w: usize, c: usize) -> usize {
    (h * shape[1] + w) * shape[2] + c
}

/// Inverse of [`flat_index`].
pub fn unflatten_index(shape: [usize; 3], i: usize) -> (usize, usize, usize) {
    let c = i % shape[2];
    let w = (i / shape[2]) % shape[1];
    let h = i / (shape[1] * shape[2]);
    (h, w, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_lengths() {
        assert_eq!(BackboneSpec::new("vgg16", Some([7, 7, 512])).declared_len(), Some(25088));
        assert_eq!(BackboneSpec::new("resnet50", Some([7, 7, 2048])).declared_len(), Some(100352));
        assert_eq!(BackboneSpec::stub().declared_len(), Some(147));
    }

    #[test]
    fn stub_needs_no_model() {
        let b = load_backbone(&BackboneSpec::stub()).unwrap();
        assert_eq!(b.flat_len(), 147);
        assert_eq!(b.output_shape(), [7, 7, 3]);
    }

    #[test]
    fn stub_with_wrong_declaration() {
        let spec = BackboneSpec::new(STUB_NAME, Some([7, 7, 4]));
        assert!(matches!(load_backbone(&spec), Err(BackboneError::ShapeMismatch { .. })));
    }

    #[test]
    fn missing_model_path() {
        let spec = BackboneSpec::new("vgg16", Some([7, 7, 512]));
        assert!(matches!(load_backbone(&spec), Err(BackboneError::ModelLoad { .. })));
        let spec = spec.with_model("/nonexistent/vgg16.onnx");
        assert!(matches!(load_backbone(&spec), Err(BackboneError::ModelLoad { .. })));
    }

    #[test]
    fn stub_constant_frame() {
        let b = load_backbone(&BackboneSpec::stub()).unwrap();
        let f = extract_features(&b, &FrameTensor::constant(0.25)).unwrap();
        assert_eq!(f.values.len(), 147);
        assert!(f.values.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn stub_half_split_frame() {
        let mut values = vec![0.0f32; FrameTensor::LEN];
        for y in 0..224 {
            for x in 112..224 {
                for c in 0..3 {
                    values[(y * 224 + x) * 3 + c] = 1.0;
                }
            }
        }
        let frame = FrameTensor::new(values, "v", 0).unwrap();
        let b = load_backbone(&BackboneSpec::stub()).unwrap();
        let f = extract_features(&b, &frame).unwrap();
        // columns of 32 px: cells 0..3 cover x < 96, cell 3 straddles the
        // edge (x 96..128, half ones), cells 4..7 are all ones
        for h in 0..7 {
            for c in 0..3 {
                assert_eq!(f.values[flat_index([7, 7, 3], h, 0, c)], 0.0);
                assert_eq!(f.values[flat_index([7, 7, 3], h, 2, c)], 0.0);
                assert_eq!(f.values[flat_index([7, 7, 3], h, 3, c)], 0.5);
                assert_eq!(f.values[flat_index([7, 7, 3], h, 6, c)], 1.0);
            }
        }
    }

    #[test]
    fn preprocessing_modes() {
        let v = [0.0f32, 0.5, 1.0];
        assert_eq!(Preprocessing::SymmetricUnitInterval.apply(&v), vec![-1.0, 0.0, 1.0]);
        let p = Preprocessing::Custom {
            mean: [0.5, 0.0, 1.0],
            std: [0.5, 1.0, 2.0],
        };
        assert_eq!(p.apply(&v), vec![-1.0, 0.5, 0.0]);
    }

    #[test]
    fn flatten_round_trip() {
        let shape = [7, 7, 512];
        for i in [0, 1, 511, 512, 3583, 3584, 25087] {
            let (h, w, c) = unflatten_index(shape, i);
            assert_eq!(flat_index(shape, h, w, c), i);
        }
    }
}
