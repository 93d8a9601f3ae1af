//! Mini-batch training of the head with validation-driven early stopping.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbone::TaggedFeature;
use crate::dataset::Split;
use crate::head::{
    argmax, backward, cross_entropy_loss, forward, init_head, HeadConfig, HeadError,
    HeadNetwork, Mode, Optimizer, OptimizerKind,
};
use crate::seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("evaluation set is empty")]
    EmptySet,
    #[error("feature dimension {actual} does not match head input {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{video_id} frame {frame_index} is tagged {split} but was passed as {expected} data")]
    SplitViolation {
        video_id: String,
        frame_index: u64,
        split: Split,
        expected: Split,
    },
    #[error("{video_id} frame {frame_index} has no label or a label outside 0..{classes}")]
    MissingLabel {
        video_id: String,
        frame_index: u64,
        classes: usize,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Head(#[from] HeadError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            early_stop_patience: 10,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (lowest validation loss, or lowest
    /// training loss without a validation set).
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl EpochRecord {
    /// `epoch=<n> train_loss=<x> val_loss=<y> val_acc=<z>`
    pub fn progress_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
        format!(
            "epoch={} train_loss={:.6} val_loss={} val_acc={}",
            self.epoch,
            self.train_loss,
            opt(self.val_loss),
            opt(self.val_accuracy)
        )
    }

    fn selection_loss(&self) -> f64 {
        self.val_loss.unwrap_or(self.train_loss)
    }
}

/// Labeled feature matrix.
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn one_hot(&self, classes: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.len(), classes), |(i, k)| {
            if self.labels[i] == k {
                1.0
            } else {
                0.0
            }
        })
    }

    fn select(&self, rows: &[usize]) -> LabeledBatch {
        LabeledBatch {
            x: self.x.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}

/// Builds a batch from tagged features, requiring every row to carry
/// `expected` as its split.
pub fn labeled_batch(
    features: &[TaggedFeature],
    expected: Split,
    dim: usize,
    classes: usize,
) -> Result<LabeledBatch> {
    let mut data = Vec::with_capacity(features.len() * dim);
    let mut labels = Vec::with_capacity(features.len());
    for t in features {
        let f = &t.feature;
        if t.split != expected {
            return Err(TrainError::SplitViolation {
                video_id: f.video_id.clone(),
                frame_index: f.frame_index,
                split: t.split,
                expected,
            });
        }
        if f.dim() != dim {
            return Err(TrainError::DimensionMismatch {
                expected: dim,
                actual: f.dim(),
            });
        }
        match f.label_index {
            Some(l) if l < classes => labels.push(l),
            _ => {
                return Err(TrainError::MissingLabel {
                    video_id: f.video_id.clone(),
                    frame_index: f.frame_index,
                    classes,
                })
            }
        }
        data.extend(f.values.iter().map(|&v| v as f64));
    }
    let x = Array2::from_shape_vec((labels.len(), dim), data)
        .map_err(|e| HeadError::Shape(e.to_string()))?;
    Ok(LabeledBatch { x, labels })
}

/// Inference-mode mean loss and accuracy. Ties in the argmax go to the
/// lowest class index.
pub fn evaluate_epoch(net: &HeadNetwork, batch: &LabeledBatch) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(TrainError::EmptySet);
    }
    let probs = net.predict_proba(batch.x.view())?;
    let loss = cross_entropy_loss(&probs, &batch.one_hot(net.output_dim()))?;
    let correct = probs
        .rows()
        .into_iter()
        .zip(&batch.labels)
        .filter(|(row, &label)| argmax(row.as_slice().expect("contiguous row")) == label)
        .count();
    Ok((loss, correct as f64 / batch.len() as f64))
}

fn check_config(cfg: &TrainConfig) -> Result<()> {
    if cfg.batch_size == 0 {
        return Err(TrainError::Config("batch_size must be positive".into()));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(TrainError::Config("learning_rate must be positive".into()));
    }
    Ok(())
}

/// Trains a freshly initialized head.
///
/// `train` rows must be tagged [`Split::Train`] and `val` rows
/// [`Split::Val`]. Each epoch shuffles the training rows with a seed derived
/// from `(train_config.seed, epoch)`, then evaluates both sets in inference
/// mode. The returned network is the one with the lowest validation loss.
/// `on_epoch` sees every record as soon as it is complete.
pub fn train(
    train_set: &[TaggedFeature],
    val_set: &[TaggedFeature],
    head_config: &HeadConfig,
    train_config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(HeadNetwork, TrainHistory)> {
    check_config(train_config)?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let dim = head_config.input_dim;
    let classes = head_config.output_dim;
    let train_batch = labeled_batch(train_set, Split::Train, dim, classes)?;
    let val_batch = labeled_batch(val_set, Split::Val, dim, classes)?;
    let mut net = init_head(head_config)?;
    let (net, history) = fit(&mut net, &train_batch, &val_batch, train_config, &mut on_epoch)?;
    Ok((net, history))
}

/// Training loop over prepared batches, starting from `net`.
pub fn fit(
    net: &mut HeadNetwork,
    train_batch: &LabeledBatch,
    val_batch: &LabeledBatch,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(HeadNetwork, TrainHistory)> {
    check_config(cfg)?;
    if train_batch.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if train_batch.x.ncols() != net.input_dim() {
        return Err(TrainError::DimensionMismatch {
            expected: net.input_dim(),
            actual: train_batch.x.ncols(),
        });
    }
    let classes = net.output_dim();
    let n = train_batch.len();
    let batch_size = cfg.batch_size.min(n);
    let shuffle_seed = seed::derive_seed(cfg.seed, seed::STREAM_SHUFFLE);
    let mut dropout_rng = seed::rng_for(cfg.seed, seed::STREAM_DROPOUT);
    let mut optimizer = Optimizer::new(cfg.optimizer, net, cfg.learning_rate);

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, HeadNetwork)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng_for(shuffle_seed, epoch as u64));
        for chunk in order.chunks(batch_size) {
            let b = train_batch.select(chunk);
            let (probs, cache) = forward(net, b.x.view(), Mode::Train, &mut dropout_rng)?;
            let grads = backward(net, &cache, &probs, &b.one_hot(classes))?;
            optimizer.step(net, &grads)?;
            net.snap_to_f32();
        }

        let (train_loss, train_accuracy) = evaluate_epoch(net, train_batch)?;
        let (val_loss, val_accuracy) = if val_batch.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_epoch(net, val_batch)?;
            (Some(l), Some(a))
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        };
        on_epoch(&record);
        let score = record.selection_loss();
        history.epochs.push(record);

        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, net.clone()));
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
                history.stopped_early = true;
                break;
            }
        }
    }

    let result = best.map(|(_, n)| n).unwrap_or_else(|| net.clone());
    Ok((result, history))
}

/// Convenience for callers that hold plain feature vectors.
pub fn tag_all(features: Vec<crate::backbone::FeatureVector>, split: Split) -> Vec<TaggedFeature> {
    features
        .into_iter()
        .map(|feature| TaggedFeature { feature, split })
        .collect()
}
