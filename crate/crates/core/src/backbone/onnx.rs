use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;

use super::{BackboneError, Layout, Result};
use crate::frames::{CHANNELS, INPUT_SIZE};

pub(super) struct OnnxEngine {
    name: String,
    plan: Arc<TypedRunnableModel>,
    layout: Layout,
    raw_output: Vec<usize>,
    output_shape: [usize; 3],
}

impl OnnxEngine {
    pub(super) fn load(name: &str, path: &Path, layout: Layout) -> Result<Self> {
        let load_err = |e: TractError| BackboneError::ModelLoad {
            name: name.to_string(),
            message: format!("{}: {e:#}", path.display()),
        };
        let input_shape = input_shape(layout);
        let model = tract_onnx::onnx()
            .model_for_path(path)
            .and_then(|m| m.with_input_fact(0, f32::fact(input_shape).into()))
            .and_then(|m| m.into_optimized())
            .map_err(load_err)?;
        let fact = model.output_fact(0).map_err(load_err)?;
        let raw_output: Vec<usize> = fact
            .shape
            .as_concrete()
            .ok_or_else(|| BackboneError::ModelLoad {
                name: name.to_string(),
                message: format!("output shape {:?} is not concrete", fact.shape),
            })?
            .to_vec();
        let output_shape = feature_map_shape(&raw_output, layout).ok_or_else(|| {
            BackboneError::ModelLoad {
                name: name.to_string(),
                message: format!("unsupported output shape {raw_output:?}"),
            }
        })?;
        let plan = model.into_runnable().map_err(load_err)?;
        Ok(Self {
            name: name.to_string(),
            plan,
            layout,
            raw_output,
            output_shape,
        })
    }

    pub(super) fn output_shape(&self) -> [usize; 3] {
        self.output_shape
    }

    pub(super) fn run(&self, hwc: &[f32]) -> Result<Vec<f32>> {
        let infer_err = |e: TractError| BackboneError::Inference {
            name: self.name.clone(),
            message: format!("{e:#}"),
        };
        let data = match self.layout {
            Layout::Nhwc => hwc.to_vec(),
            Layout::Nchw => hwc_to_chw(hwc, INPUT_SIZE, INPUT_SIZE, CHANNELS),
        };
        let input = Tensor::from_shape::<f32>(&input_shape(self.layout), &data).map_err(infer_err)?;
        let outputs = self.plan.run(tvec!(input.into())).map_err(infer_err)?;
        let view = outputs[0].to_plain_array_view::<f32>().map_err(infer_err)?;
        if view.shape() != self.raw_output.as_slice() {
            return Err(BackboneError::Inference {
                name: self.name.clone(),
                message: format!(
                    "output shape {:?} differs from planned {:?}",
                    view.shape(),
                    self.raw_output
                ),
            });
        }
        let flat: Vec<f32> = view.iter().copied().collect();
        let [h, w, c] = self.output_shape;
        Ok(match (self.layout, self.raw_output.len()) {
            (Layout::Nchw, 4) => chw_to_hwc(&flat, h, w, c),
            _ => flat,
        })
    }
}

fn input_shape(layout: Layout) -> [usize; 4] {
    match layout {
        Layout::Nhwc => [1, INPUT_SIZE, INPUT_SIZE, CHANNELS],
        Layout::Nchw => [1, CHANNELS, INPUT_SIZE, INPUT_SIZE],
    }
}

/// (H, W, C) of a batch-1 model output; pooled (1, C) outputs become (1, 1, C).
fn feature_map_shape(raw: &[usize], layout: Layout) -> Option<[usize; 3]> {
    match (raw, layout) {
        ([1, h, w, c], Layout::Nhwc) => Some([*h, *w, *c]),
        ([1, c, h, w], Layout::Nchw) => Some([*h, *w, *c]),
        ([1, c], _) => Some([1, 1, *c]),
        _ => None,
    }
}

fn hwc_to_chw(src: &[f32], h: usize, w: usize, c: usize) -> Vec<f32> {
    let mut out = vec![0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out[(ch * h + y) * w + x] = src[(y * w + x) * c + ch];
            }
        }
    }
    out
}

fn chw_to_hwc(src: &[f32], h: usize, w: usize, c: usize) -> Vec<f32> {
    let mut out = vec![0f32; src.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(y * w + x) * c + ch] = src[(ch * h + y) * w + x];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_transposes_invert() {
        let src: Vec<f32> = (0..2 * 3 * 4).map(|v| v as f32).collect();
        let chw = hwc_to_chw(&src, 2, 3, 4);
        assert_eq!(chw_to_hwc(&chw, 2, 3, 4), src);
        // channel 1 of pixel (0, 0) lands at CHW offset h*w
        assert_eq!(chw[6], src[1]);
    }

    #[test]
    fn output_shape_mapping() {
        assert_eq!(feature_map_shape(&[1, 7, 7, 512], Layout::Nhwc), Some([7, 7, 512]));
        assert_eq!(feature_map_shape(&[1, 2048, 7, 7], Layout::Nchw), Some([7, 7, 2048]));
        assert_eq!(feature_map_shape(&[1, 1280], Layout::Nhwc), Some([1, 1, 1280]));
        assert_eq!(feature_map_shape(&[2, 7, 7, 512], Layout::Nhwc), None);
    }
}
