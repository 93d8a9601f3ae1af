//! Name to [`BackboneSpec`] mapping, loaded from TOML or JSON.
//!
//! ```toml
//! [backbones.vgg16]
//! model_path = "models/vgg16_notop.onnx"
//! layout = "nhwc"
//! declared_output_shape = [7, 7, 512]
//! preprocessing = "unit_interval"
//! ```
//!
//! Relative model paths resolve against the registry file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BackboneError, BackboneSpec, Layout, Preprocessing, Result, STUB_NAME};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub declared_output_shape: Option<[usize; 3]>,
    #[serde(default)]
    pub preprocessing: Preprocessing,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BackboneRegistry {
    #[serde(default)]
    pub backbones: BTreeMap<String, RegistryEntry>,
}

impl BackboneRegistry {
    /// Known backbones with their feature-map shapes. Only `stub` is usable
    /// without a model file. InceptionV3 and MobileNetV2 have no declared
    /// shape; theirs comes from the model.
    pub fn builtin() -> Self {
        let entry = |shape: Option<[usize; 3]>, pre: Preprocessing| RegistryEntry {
            model_path: None,
            layout: Layout::Nhwc,
            declared_output_shape: shape,
            preprocessing: pre,
        };
        let mut backbones = BTreeMap::new();
        backbones.insert(
            STUB_NAME.to_string(),
            entry(Some([7, 7, 3]), Preprocessing::UnitInterval),
        );
        backbones.insert("vgg16".into(), entry(Some([7, 7, 512]), Preprocessing::UnitInterval));
        backbones.insert("resnet50".into(), entry(Some([7, 7, 2048]), Preprocessing::UnitInterval));
        backbones.insert(
            "xception".into(),
            entry(Some([7, 7, 2048]), Preprocessing::SymmetricUnitInterval),
        );
        backbones.insert(
            "mobilenet_v2".into(),
            entry(None, Preprocessing::SymmetricUnitInterval),
        );
        backbones.insert(
            "inception_v3".into(),
            entry(None, Preprocessing::SymmetricUnitInterval),
        );
        Self { backbones }
    }

    pub fn parse(text: &str, is_json: bool) -> std::result::Result<Self, String> {
        if is_json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        }
    }

    /// Builtins overlaid with the entries of the file at `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let err = |message: String| BackboneError::Registry {
            path: path.to_path_buf(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let mut file = Self::parse(&text, is_json).map_err(err)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for entry in file.backbones.values_mut() {
            if let Some(p) = &entry.model_path {
                if p.is_relative() {
                    entry.model_path = Some(base.join(p));
                }
            }
        }
        let mut reg = Self::builtin();
        reg.backbones.append(&mut file.backbones);
        Ok(reg)
    }

    pub fn resolve(&self, name: &str) -> Result<BackboneSpec> {
        let e = self
            .backbones
            .get(name)
            .ok_or_else(|| BackboneError::UnknownBackbone(name.to_string()))?;
        Ok(BackboneSpec {
            name: name.to_string(),
            model_path: e.model_path.clone(),
            layout: e.layout,
            declared_output_shape: e.declared_output_shape,
            preprocessing: e.preprocessing.clone(),
        })
    }
}
