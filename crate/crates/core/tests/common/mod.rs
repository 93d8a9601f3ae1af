pub mod onnx_fixture;
