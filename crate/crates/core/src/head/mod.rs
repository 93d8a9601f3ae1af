//! The trainable classifier head.
//!
//! Five fully-connected layers: four hidden ReLU layers, each followed by
//! inverted dropout during training, and a softmax output layer. Weights
//! are stored `(fan_in, fan_out)` so a layer computes `x W + b` on row
//! batches.
//!
//! Parameters are computed in `f64` but kept on the `f32` grid after
//! initialization and after every training step, which makes the `f32`
//! weights file of a bundle lossless.

mod bundle;
mod optim;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbone::{FeatureVector, NormStats};
use crate::dataset::LabelVocabulary;

pub use bundle::{load_model, save_model, MODEL_FILE, MODEL_FORMAT, MODEL_VERSION, WEIGHTS_FILE};
pub use optim::{adam_update, optimizer_step, Adam, AdamHyper, AdamState, Optimizer, OptimizerKind, Sgd};

pub const NUM_HIDDEN: usize = 4;
pub const NUM_LAYERS: usize = NUM_HIDDEN + 1;
/// Floor applied to probabilities inside the log of the loss.
pub const LOSS_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("invalid head config: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("forward cache does not match this batch: {0}")]
    StaleCache(String),
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("feature dimension {actual} does not match model input {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("model was trained on backbone {model_backbone:?} ({expected} features) but features come from {feature_backbone:?} ({actual} features)")]
    BackboneMismatch {
        model_backbone: String,
        feature_backbone: String,
        expected: usize,
        actual: usize,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad model bundle: {0}")]
    Format(String),
    #[error("weights checksum mismatch: expected {expected}, found {actual}")]
    Checksum { expected: String, actual: String },
}

pub type Result<T> = std::result::Result<T, HeadError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub input_dim: usize,
    pub hidden_widths: [usize; NUM_HIDDEN],
    pub output_dim: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl HeadConfig {
    pub const DEFAULT_HIDDEN: [usize; NUM_HIDDEN] = [512, 256, 128, 64];
    pub const DEFAULT_DROPOUT: f64 = 0.5;

    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_widths: Self::DEFAULT_HIDDEN,
            output_dim,
            dropout_rate: Self::DEFAULT_DROPOUT,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(HeadError::Config("input and output dims must be positive".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(HeadError::Config(format!(
                "hidden widths must be positive, got {:?}",
                self.hidden_widths
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(HeadError::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer.
    pub fn layer_shapes(&self) -> [(usize, usize); NUM_LAYERS] {
        let h = self.hidden_widths;
        [
            (self.input_dim, h[0]),
            (h[0], h[1]),
            (h[1], h[2]),
            (h[2], h[3]),
            (h[3], self.output_dim),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Weights and biases of the five layers.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadNetwork {
    pub config: HeadConfig,
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Intermediate values of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Array2<f64>,
    /// `x W + b` of each hidden layer.
    pub pre_activations: Vec<Array2<f64>>,
    /// Hidden outputs after ReLU and dropout.
    pub activations: Vec<Array2<f64>>,
    /// Dropout masks (0 or `1 / (1 - p)`); `None` when dropout is off.
    pub masks: Vec<Option<Array2<f64>>>,
    pub logits: Array2<f64>,
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &HeadNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Rounds to the nearest `f32`, then nudges toward zero if that overshoots
/// `bound` in magnitude.
fn snap_within(v: f64, bound: f64) -> f64 {
    let mut s = v as f32;
    if (s as f64).abs() > bound {
        s = f32::from_bits(s.to_bits() - 1);
    }
    s as f64
}

fn snap(v: f64) -> f64 {
    v as f32 as f64
}

/// Glorot-uniform weights, zero biases, deterministic in `config.seed`.
pub fn init_head(config: &HeadConfig) -> Result<HeadNetwork> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layers = config
        .layer_shapes()
        .iter()
        .map(|&(fan_in, fan_out)| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                snap_within(rng.random_range(-bound..bound), bound)
            });
            DenseLayer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(HeadNetwork {
        config: config.clone(),
        layers,
    })
}

impl HeadNetwork {
    /// Zero weights and biases; softmax output is uniform.
    pub fn zeros(config: &HeadConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .iter()
            .map(|&(i, o)| DenseLayer {
                weights: Array2::zeros((i, o)),
                bias: Array1::zeros(o),
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn snap_to_f32(&mut self) {
        for l in &mut self.layers {
            l.weights.mapv_inplace(snap);
            l.bias.mapv_inplace(snap);
        }
    }

    /// Inference-mode probabilities.
    pub fn predict_proba(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        // infer mode draws nothing from the generator
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (p, _) = forward(self, batch, Mode::Infer, &mut rng)?;
        Ok(p)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Inverted-dropout mask: each entry is `1 / (1 - rate)` with probability
/// `1 - rate`, else 0.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    Array2::from_shape_simple_fn((rows, cols), || {
        if rng.random::<f64>() < keep {
            scale
        } else {
            0.0
        }
    })
}

pub fn forward<R: Rng + ?Sized>(
    net: &HeadNetwork,
    batch: ArrayView2<f64>,
    mode: Mode,
    rng: &mut R,
) -> Result<(Array2<f64>, ForwardCache)> {
    if batch.ncols() != net.input_dim() {
        return Err(HeadError::Shape(format!(
            "batch has {} columns, model expects {}",
            batch.ncols(),
            net.input_dim()
        )));
    }
    if batch.iter().any(|v| !v.is_finite()) {
        return Err(HeadError::NonFiniteInput);
    }
    let rate = net.config.dropout_rate;
    let mut cache = ForwardCache {
        input: batch.to_owned(),
        pre_activations: Vec::with_capacity(NUM_HIDDEN),
        activations: Vec::with_capacity(NUM_HIDDEN),
        masks: Vec::with_capacity(NUM_HIDDEN),
        logits: Array2::zeros((0, 0)),
    };
    let mut x = batch.to_owned();
    for layer in &net.layers[..NUM_HIDDEN] {
        let z = x.dot(&layer.weights) + &layer.bias;
        let mut a = z.mapv(|v| v.max(0.0));
        let mask = (mode == Mode::Train && rate > 0.0)
            .then(|| dropout_mask(a.nrows(), a.ncols(), rate, rng));
        if let Some(m) = &mask {
            a *= m;
        }
        cache.pre_activations.push(z);
        cache.masks.push(mask);
        cache.activations.push(a.clone());
        x = a;
    }
    let out = &net.layers[NUM_HIDDEN];
    let logits = x.dot(&out.weights) + &out.bias;
    let probs = softmax_rows(&logits);
    cache.logits = logits;
    Ok((probs, cache))
}

/// Mean categorical cross-entropy with the probability floored at 1e-12.
pub fn cross_entropy_loss(probabilities: &Array2<f64>, targets: &Array2<f64>) -> Result<f64> {
    if probabilities.dim() != targets.dim() || probabilities.nrows() == 0 {
        return Err(HeadError::Shape(format!(
            "probabilities {:?} vs targets {:?}",
            probabilities.dim(),
            targets.dim()
        )));
    }
    let total: f64 = probabilities
        .iter()
        .zip(targets.iter())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.max(LOSS_EPSILON).ln())
        .sum();
    Ok(-total / probabilities.nrows() as f64)
}

/// Gradients of the mean cross-entropy with respect to every parameter.
pub fn backward(
    net: &HeadNetwork,
    cache: &ForwardCache,
    probabilities: &Array2<f64>,
    targets: &Array2<f64>,
) -> Result<Gradients> {
    let b = cache.input.nrows();
    if probabilities.dim() != (b, net.output_dim()) || targets.dim() != probabilities.dim() {
        return Err(HeadError::StaleCache(format!(
            "cache batch {b}, probabilities {:?}, targets {:?}",
            probabilities.dim(),
            targets.dim()
        )));
    }
    if cache.activations.len() != NUM_HIDDEN
        || cache
            .activations
            .iter()
            .zip(&net.layers)
            .any(|(a, l)| a.dim() != (b, l.weights.ncols()))
    {
        return Err(HeadError::StaleCache("hidden activation shapes differ".into()));
    }

    let mut grads = Gradients::zeros_like(net);
    let mut delta = (probabilities - targets) / b as f64;
    for l in (0..NUM_LAYERS).rev() {
        let input = if l == 0 { &cache.input } else { &cache.activations[l - 1] };
        grads.weights[l] = input.t().dot(&delta);
        grads.biases[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut d = delta.dot(&net.layers[l].weights.t());
            if let Some(mask) = &cache.masks[l - 1] {
                d *= mask;
            }
            d.zip_mut_with(&cache.pre_activations[l - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = d;
        }
    }
    Ok(grads)
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A trained head together with everything needed to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    pub network: HeadNetwork,
    pub vocabulary: LabelVocabulary,
    pub norm_stats: NormStats,
    pub backbone_name: String,
}

impl HeadModel {
    pub fn new(
        network: HeadNetwork,
        vocabulary: LabelVocabulary,
        norm_stats: NormStats,
        backbone_name: impl Into<String>,
    ) -> Result<Self> {
        if vocabulary.len() != network.output_dim() {
            return Err(HeadError::Config(format!(
                "vocabulary has {} labels, network outputs {}",
                vocabulary.len(),
                network.output_dim()
            )));
        }
        if norm_stats.dim() != network.input_dim() {
            return Err(HeadError::Config(format!(
                "normalization stats cover {} dims, network input is {}",
                norm_stats.dim(),
                network.input_dim()
            )));
        }
        Ok(Self {
            network,
            vocabulary,
            norm_stats,
            backbone_name: backbone_name.into(),
        })
    }

    /// Rejects features from another backbone or of the wrong length.
    pub fn check_features(&self, backbone_name: &str, dim: usize) -> Result<()> {
        if backbone_name != self.backbone_name || dim != self.network.input_dim() {
            return Err(HeadError::BackboneMismatch {
                model_backbone: self.backbone_name.clone(),
                feature_backbone: backbone_name.to_string(),
                expected: self.network.input_dim(),
                actual: dim,
            });
        }
        Ok(())
    }

    /// Applies the embedded normalization statistics.
    pub fn normalize(&self, feature: &FeatureVector) -> Result<FeatureVector> {
        crate::backbone::apply_feature_normalizer(&self.norm_stats, feature).map_err(|_| {
            HeadError::DimensionMismatch {
                expected: self.norm_stats.dim(),
                actual: feature.dim(),
            }
        })
    }
}

/// Stacks feature values into a `(rows, dim)` batch.
pub fn feature_batch<'a, I>(features: I, dim: usize) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut data = Vec::new();
    let mut rows = 0;
    for f in features {
        if f.dim() != dim {
            return Err(HeadError::DimensionMismatch {
                expected: dim,
                actual: f.dim(),
            });
        }
        data.extend(f.values.iter().map(|&v| v as f64));
        rows += 1;
    }
    Array2::from_shape_vec((rows, dim), data).map_err(|e| HeadError::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_config() -> HeadConfig {
        HeadConfig {
            input_dim: 10,
            hidden_widths: [8, 6, 5, 4],
            output_dim: 3,
            dropout_rate: 0.0,
            seed: 11,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let mut c = small_config();
        c.seed = 7;
        assert_eq!(init_head(&c).unwrap(), init_head(&c).unwrap());
        c.seed = 8;
        assert_ne!(init_head(&c).unwrap(), init_head(&small_config()).unwrap());
    }

    #[test]
    fn init_rejects_bad_config() {
        let mut c = small_config();
        c.hidden_widths[2] = 0;
        assert!(matches!(init_head(&c), Err(HeadError::Config(_))));
        let mut c = small_config();
        c.dropout_rate = 1.0;
        assert!(matches!(init_head(&c), Err(HeadError::Config(_))));
    }

    #[test]
    fn glorot_bound_first_layer() {
        let mut c = HeadConfig::new(147, 3);
        c.seed = 3;
        let net = init_head(&c).unwrap();
        let bound = (6.0f64 / 659.0).sqrt();
        let w = &net.layers[0].weights;
        assert_eq!(w.dim(), (147, 512));
        assert!(w.iter().all(|v| v.abs() <= bound));
        // the draw actually spreads over the range
        assert!(w.iter().any(|v| v.abs() > 0.9 * bound));
        assert!(net.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        // parameters sit on the f32 grid
        assert!(w.iter().all(|&v| v == v as f32 as f64));
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = HeadNetwork::zeros(&small_config()).unwrap();
        let batch = Array2::from_shape_fn((4, 10), |(i, j)| (i * 10 + j) as f64 - 7.0);
        let p = net.predict_proba(batch.view()).unwrap();
        for v in p.iter() {
            assert_eq!(*v, 1.0 / 3.0);
        }
    }

    #[test]
    fn infer_mode_ignores_dropout_rate() {
        let mut c = small_config();
        c.dropout_rate = 0.5;
        let net = init_head(&c).unwrap();
        let mut no_drop = net.clone();
        no_drop.config.dropout_rate = 0.0;
        let batch = Array2::from_shape_fn((3, 10), |(i, j)| ((i + 2 * j) % 5) as f64 / 5.0);
        assert_eq!(
            net.predict_proba(batch.view()).unwrap(),
            no_drop.predict_proba(batch.view()).unwrap()
        );
    }

    #[test]
    fn hand_evaluated_chain() {
        // 2-2-3 core: input (1, 2), first layer sends it through a scaled
        // identity, the remaining hidden layers pass through, and the output
        // layer maps [u, v] to logits [u, v, 0].
        let c = HeadConfig {
            input_dim: 2,
            hidden_widths: [2, 2, 2, 2],
            output_dim: 3,
            dropout_rate: 0.0,
            seed: 0,
        };
        let mut net = HeadNetwork::zeros(&c).unwrap();
        net.layers[0].weights = array![[2.0, 0.0], [0.0, -1.0]];
        net.layers[0].bias = array![0.5, 0.25];
        for l in 1..4 {
            net.layers[l].weights = array![[1.0, 0.0], [0.0, 1.0]];
        }
        net.layers[4].weights = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        net.layers[4].bias = array![0.0, 0.0, 0.1];
        let x = array![[0.3, 0.1]];
        // hidden: relu(2*0.3+0.5)=1.1, relu(-0.1+0.25)=0.15
        let logits = [1.1f64, 0.15, 0.1];
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        let p = net.predict_proba(x.view()).unwrap();
        for k in 0..3 {
            assert!((p[[0, k]] - logits[k].exp() / z).abs() < 1e-9);
        }
        // a negative pre-activation is cut by the ReLU
        let p = net.predict_proba(array![[0.3, 0.4]].view()).unwrap();
        let logits = [1.1f64, 0.0, 0.1];
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        assert!((p[[0, 1]] - 1.0 / z).abs() < 1e-9);
    }

    #[test]
    fn forward_rejects_bad_batches() {
        let net = init_head(&small_config()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            forward(&net, Array2::zeros((2, 9)).view(), Mode::Infer, &mut rng),
            Err(HeadError::Shape(_))
        ));
        let mut bad = Array2::zeros((2, 10));
        bad[[1, 3]] = f64::NAN;
        assert!(matches!(
            forward(&net, bad.view(), Mode::Infer, &mut rng),
            Err(HeadError::NonFiniteInput)
        ));
    }

    #[test]
    fn loss_examples() {
        let uniform = Array2::from_elem((2, 3), 1.0 / 3.0);
        let t = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!((cross_entropy_loss(&uniform, &t).unwrap() - 3f64.ln()).abs() < 1e-12);
        let perfect = t.clone();
        assert_eq!(cross_entropy_loss(&perfect, &t).unwrap(), 0.0);
        let p = array![[0.7, 0.2, 0.1]];
        let t = array![[1.0, 0.0, 0.0]];
        assert!((cross_entropy_loss(&p, &t).unwrap() - 0.356675).abs() < 1e-6);
        let zero = array![[0.0, 1.0, 0.0]];
        assert!((cross_entropy_loss(&zero, &t).unwrap() - (-(1e-12f64).ln())).abs() < 1e-9);
        assert!(cross_entropy_loss(&p, &array![[1.0, 0.0]]).is_err());
    }

    #[test]
    fn zero_input_kills_first_layer_gradient() {
        let net = init_head(&small_config()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::zeros((5, 10));
        let (p, cache) = forward(&net, x.view(), Mode::Train, &mut rng).unwrap();
        let t = Array2::from_shape_fn((5, 3), |(i, k)| if i % 3 == k { 1.0 } else { 0.0 });
        let g = backward(&net, &cache, &p, &t).unwrap();
        assert!(g.weights[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perfect_prediction_has_tiny_gradients() {
        let c = small_config();
        let mut net = init_head(&c).unwrap();
        // make class 1 overwhelmingly likely through the output bias
        net.layers[4].bias = array![-40.0, 40.0, -40.0];
        let x = Array2::from_shape_fn((4, 10), |(i, j)| ((i * j) % 7) as f64 / 7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (p, cache) = forward(&net, x.view(), Mode::Infer, &mut rng).unwrap();
        let t = Array2::from_shape_fn((4, 3), |(_, k)| if k == 1 { 1.0 } else { 0.0 });
        let g = backward(&net, &cache, &p, &t).unwrap();
        assert!(g.max_abs() < 1e-6, "{}", g.max_abs());
    }

    #[test]
    fn stale_cache_detected() {
        let net = init_head(&small_config()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, cache) = forward(&net, Array2::zeros((3, 10)).view(), Mode::Infer, &mut rng).unwrap();
        let p = Array2::from_elem((4, 3), 1.0 / 3.0);
        let t = Array2::from_elem((4, 3), 0.0);
        assert!(matches!(backward(&net, &cache, &p, &t), Err(HeadError::StaleCache(_))));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }

    #[test]
    fn mismatched_backbone_reports_both_names() {
        let mut c = HeadConfig::new(25088, 3);
        c.hidden_widths = [4, 4, 4, 4];
        let net = HeadNetwork::zeros(&c).unwrap();
        let model = HeadModel::new(
            net,
            LabelVocabulary::default(),
            NormStats::identity(25088),
            "vgg16",
        )
        .unwrap();
        let err = model.check_features("mobilenet_v2", 62720).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("vgg16") && msg.contains("mobilenet_v2"), "{msg}");
        assert!(model.check_features("vgg16", 25088).is_ok());
    }
}
