//! Builds tiny ONNX backbones for tests: 32x32 average pooling to a 7x7
//! grid, optionally followed by a 1x1 convolution to `channels` outputs.

use std::path::Path;

use prost::Message;
use tract_onnx::pb::{
    self, tensor_shape_proto::dimension, tensor_shape_proto::Dimension, type_proto, AttributeProto,
    GraphProto, ModelProto, NodeProto, OperatorSetIdProto, TensorProto, TensorShapeProto, TypeProto,
    ValueInfoProto,
};

const FLOAT: i32 = 1;
const ATTR_INTS: i32 = 7;

fn ints(name: &str, values: &[i64]) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: ATTR_INTS,
        ints: values.to_vec(),
        ..Default::default()
    }
}

fn node(op: &str, inputs: &[&str], output: &str, attrs: Vec<AttributeProto>) -> NodeProto {
    NodeProto {
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        name: output.into(),
        op_type: op.into(),
        attribute: attrs,
        ..Default::default()
    }
}

fn value_info(name: &str, shape: &[i64]) -> ValueInfoProto {
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: FLOAT,
                shape: Some(TensorShapeProto {
                    dim: shape
                        .iter()
                        .map(|&d| Dimension {
                            value: Some(dimension::Value::DimValue(d)),
                            ..Default::default()
                        })
                        .collect(),
                }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

/// Weight `(c, k)` of the 1x1 convolution.
pub fn conv_weight(c: usize, k: usize) -> f32 {
    ((c * 3 + k) % 7) as f32 / 7.0 - 0.25
}

/// Pooling backbone. `nhwc` selects the input/output layout; `channels`
/// of `None` keeps the 3 pooled color channels.
pub fn pooling_model(nhwc: bool, channels: Option<usize>) -> ModelProto {
    let mut nodes = Vec::new();
    let mut initializer = Vec::new();
    let mut cur = "x".to_string();
    if nhwc {
        nodes.push(node("Transpose", &["x"], "x_chw", vec![ints("perm", &[0, 3, 1, 2])]));
        cur = "x_chw".into();
    }
    nodes.push(node(
        "AveragePool",
        &[&cur],
        "pooled",
        vec![ints("kernel_shape", &[32, 32]), ints("strides", &[32, 32])],
    ));
    cur = "pooled".into();
    let out_c = channels.unwrap_or(3);
    if let Some(c) = channels {
        initializer.push(TensorProto {
            dims: vec![c as i64, 3, 1, 1],
            data_type: FLOAT,
            float_data: (0..c).flat_map(|o| (0..3).map(move |k| conv_weight(o, k))).collect(),
            name: "w".into(),
            ..Default::default()
        });
        nodes.push(node("Conv", &["pooled", "w"], "conv", vec![]));
        cur = "conv".into();
    }
    let out_shape: Vec<i64> = if nhwc {
        nodes.push(node("Transpose", &[&cur], "y", vec![ints("perm", &[0, 2, 3, 1])]));
        vec![1, 7, 7, out_c as i64]
    } else {
        nodes.push(node("Identity", &[&cur], "y", vec![]));
        vec![1, out_c as i64, 7, 7]
    };
    let in_shape: &[i64] = if nhwc { &[1, 224, 224, 3] } else { &[1, 3, 224, 224] };
    ModelProto {
        ir_version: 7,
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        producer_name: "fixture".into(),
        graph: Some(GraphProto {
            node: nodes,
            name: "pool".into(),
            initializer,
            input: vec![value_info("x", in_shape)],
            output: vec![value_info("y", &out_shape)],
            ..Default::default()
        }),
        ..Default::default()
    }
}

pub fn write_model(model: &pb::ModelProto, path: &Path) {
    std::fs::write(path, model.encode_to_vec()).unwrap();
}
