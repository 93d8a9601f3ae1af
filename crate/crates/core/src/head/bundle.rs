//! Model bundle directory: `model.json` plus `weights.bin`.
//!
//! `weights.bin` is every parameter as little-endian `f32`, in the order
//! W1, b1, ..., W5, b5, matrices row-major `(fan_in, fan_out)`.
//! `model.json` records each tensor's shape and byte offset and the
//! SHA-256 of the weights file.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DenseLayer, HeadConfig, HeadError, HeadModel, HeadNetwork, Result, NUM_LAYERS};
use crate::backbone::NormStats;
use crate::dataset::LabelVocabulary;

pub const MODEL_FORMAT: &str = "actionsense-model";
pub const MODEL_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelManifest {
    format: String,
    version: u32,
    backbone_name: String,
    config: HeadConfig,
    vocabulary: LabelVocabulary,
    norm_stats: NormStats,
    tensors: Vec<TensorEntry>,
    weights_bytes: usize,
    checksum: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HeadError + '_ {
    move |source| HeadError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn checksum(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

pub fn save_model(model: &HeadModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut bytes = Vec::with_capacity(model.network.param_count() * 4);
    let mut tensors = Vec::with_capacity(2 * NUM_LAYERS);
    for (i, layer) in model.network.layers.iter().enumerate() {
        let w = layer.weights.as_standard_layout();
        for (name, shape, values) in [
            (format!("W{}", i + 1), w.shape().to_vec(), w.iter().copied().collect::<Vec<f64>>()),
            (format!("b{}", i + 1), layer.bias.shape().to_vec(), layer.bias.to_vec()),
        ] {
            let offset = bytes.len();
            let mut length = 0;
            for v in values {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
                length += 1;
            }
            tensors.push(TensorEntry {
                name,
                shape,
                offset,
                length,
            });
        }
    }
    let manifest = ModelManifest {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        backbone_name: model.backbone_name.clone(),
        config: model.network.config.clone(),
        vocabulary: model.vocabulary.clone(),
        norm_stats: model.norm_stats.clone(),
        tensors,
        weights_bytes: bytes.len(),
        checksum: checksum(&bytes),
    };
    let wpath = dir.join(WEIGHTS_FILE);
    fs::write(&wpath, &bytes).map_err(io_err(&wpath))?;
    let mpath = dir.join(MODEL_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&mpath, json).map_err(io_err(&mpath))
}

pub fn load_model(dir: &Path) -> Result<HeadModel> {
    let mpath = dir.join(MODEL_FILE);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: ModelManifest =
        serde_json::from_str(&text).map_err(|e| HeadError::Format(format!("{}: {e}", mpath.display())))?;
    if manifest.format != MODEL_FORMAT {
        return Err(HeadError::Format(format!("unexpected format id {:?}", manifest.format)));
    }
    if manifest.version != MODEL_VERSION {
        return Err(HeadError::Format(format!("unsupported bundle version {}", manifest.version)));
    }
    manifest.config.validate()?;

    let wpath = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&wpath).map_err(io_err(&wpath))?;
    if bytes.len() != manifest.weights_bytes {
        return Err(HeadError::Format(format!(
            "{} has {} bytes, expected {}",
            wpath.display(),
            bytes.len(),
            manifest.weights_bytes
        )));
    }
    let actual = checksum(&bytes);
    if actual != manifest.checksum {
        return Err(HeadError::Checksum {
            expected: manifest.checksum,
            actual,
        });
    }

    let shapes = manifest.config.layer_shapes();
    if manifest.tensors.len() != 2 * NUM_LAYERS {
        return Err(HeadError::Format(format!(
            "expected {} tensors, found {}",
            2 * NUM_LAYERS,
            manifest.tensors.len()
        )));
    }
    let read = |t: &TensorEntry, shape: &[usize]| -> Result<Vec<f64>> {
        let n: usize = shape.iter().product();
        if t.shape != shape || t.length != n {
            return Err(HeadError::Format(format!(
                "tensor {} has shape {:?}, config implies {:?}",
                t.name, t.shape, shape
            )));
        }
        let end = t.offset + 4 * n;
        let slice = bytes.get(t.offset..end).ok_or_else(|| {
            HeadError::Format(format!("tensor {} runs past the end of the weights", t.name))
        })?;
        Ok(slice
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    };
    let mut layers = Vec::with_capacity(NUM_LAYERS);
    for (i, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let w = read(&manifest.tensors[2 * i], &[fan_in, fan_out])?;
        let b = read(&manifest.tensors[2 * i + 1], &[fan_out])?;
        layers.push(DenseLayer {
            weights: Array2::from_shape_vec((fan_in, fan_out), w)
                .map_err(|e| HeadError::Format(e.to_string()))?,
            bias: Array1::from_vec(b),
        });
    }
    let network = HeadNetwork {
        config: manifest.config,
        layers,
    };
    if !network.is_finite() {
        return Err(HeadError::Format("non-finite parameter in weights".into()));
    }
    HeadModel::new(network, manifest.vocabulary, manifest.norm_stats, manifest.backbone_name)
        .map_err(|e| HeadError::Format(e.to_string()))
}
