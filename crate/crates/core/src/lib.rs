//! Video action classification from sparsely sampled frames.
//!
//! The pipeline decodes a clip, keeps one frame per second, resizes and
//! normalizes it, runs a frozen convolutional backbone to get a flat
//! feature vector, classifies every frame with a small fully-connected
//! softmax head and finally decides the clip label by majority vote.
//!
//! Module map:
//!
//! - [`dataset`]: labeled-video manifest, stratified splitting, one-hot labels
//! - [`frames`]: decoding, fps-modulo sampling, bilinear resize, pixel scaling
//! - [`backbone`]: feature extractors (built-in stub and ONNX), feature
//!   normalization, the on-disk feature cache
//! - [`head`]: the 5-layer MLP, backpropagation, optimizers, model bundles
//! - [`trainer`]: mini-batch training with validation-driven early stopping
//! - [`evaluator`]: frame prediction, majority vote, confusion matrices, reports
//! - [`synthetic`]: generated fixtures (color-pattern clips, Gaussian blobs)

pub mod backbone;
pub mod dataset;
pub mod evaluator;
pub mod frames;
pub mod head;
pub mod seed;
pub mod synthetic;
pub mod trainer;

pub use backbone::{Backbone, BackboneSpec, FeatureVector, NormStats};
pub use dataset::{DatasetManifest, LabelVocabulary, Split, SplitRatios, VideoRecord};
pub use evaluator::{EvaluationReport, FramePrediction, VideoDecision};
pub use frames::{FrameTensor, RawFrame};
pub use head::{HeadConfig, HeadModel, HeadNetwork};
pub use trainer::{TrainConfig, TrainHistory};
