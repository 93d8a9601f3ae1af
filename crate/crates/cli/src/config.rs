//! Settings resolution: flags > `ACTIONSENSE_*` environment > TOML file >
//! built-in defaults.
//!
//! Clap folds flags and environment together; this module layers the file
//! and defaults underneath and produces a fully resolved [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use actionsense::evaluator::ReportFormat;
use actionsense::head::OptimizerKind;
use actionsense::{HeadConfig, SplitRatios};
use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file with [dataset], [backbone], [head], [train], [eval]
    #[arg(long, global = true, env = "ACTIONSENSE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Dataset manifest (JSON lines)
    #[arg(long, global = true, env = "ACTIONSENSE_MANIFEST")]
    pub manifest: Option<PathBuf>,
    /// Backbone name, resolved through the registry
    #[arg(long, global = true, env = "ACTIONSENSE_BACKBONE")]
    pub backbone: Option<String>,
    /// Backbone registry file (TOML or JSON) overlaying the built-ins
    #[arg(long, global = true, env = "ACTIONSENSE_REGISTRY")]
    pub registry: Option<PathBuf>,
    /// Feature cache directory
    #[arg(long, global = true, env = "ACTIONSENSE_FEATURES")]
    pub features: Option<PathBuf>,
    /// Model bundle directory
    #[arg(long, global = true, env = "ACTIONSENSE_MODEL")]
    pub model: Option<PathBuf>,
    /// Report file (JSON)
    #[arg(long, global = true, env = "ACTIONSENSE_REPORT")]
    pub report: Option<PathBuf>,
    /// Global seed; split, init, shuffle and dropout seeds derive from it
    #[arg(long, global = true, env = "ACTIONSENSE_SEED")]
    pub seed: Option<u64>,
    /// Split ratios train,val,test
    #[arg(long, global = true, env = "ACTIONSENSE_RATIOS")]
    pub ratios: Option<SplitRatios>,
    #[arg(long, global = true, env = "ACTIONSENSE_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long, global = true, env = "ACTIONSENSE_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, global = true, env = "ACTIONSENSE_LR")]
    pub lr: Option<f64>,
    /// Sampling rate: one frame kept out of every `fps`
    #[arg(long, global = true, env = "ACTIONSENSE_FPS")]
    pub fps: Option<u32>,
    /// Output format for reports and predictions
    #[arg(long, global = true, env = "ACTIONSENSE_FORMAT")]
    pub format: Option<ReportFormat>,
    /// Decoder command template for video files
    #[arg(long, global = true, env = "ACTIONSENSE_DECODER")]
    pub decoder: Option<String>,
    /// Extraction worker threads (default: logical CPUs)
    #[arg(long, global = true, env = "ACTIONSENSE_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    #[serde(default)]
    dataset: DatasetSection,
    #[serde(default)]
    backbone: BackboneSection,
    #[serde(default)]
    head: HeadSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    eval: EvalSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetSection {
    manifest: Option<PathBuf>,
    ratios: Option<[f64; 3]>,
    fps: Option<u32>,
    decoder: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackboneSection {
    name: Option<String>,
    registry: Option<PathBuf>,
    features: Option<PathBuf>,
    workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadSection {
    hidden: Option<[usize; 4]>,
    dropout: Option<f64>,
    model: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    patience: Option<usize>,
    optimizer: Option<OptimizerKind>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    report: Option<PathBuf>,
    format: Option<ReportFormat>,
    csv: Option<PathBuf>,
}

/// Every setting after merging. Echoed verbatim into `run-config.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub manifest: PathBuf,
    pub ratios: [f64; 3],
    pub fps: u32,
    pub decoder: String,
    pub backbone: String,
    pub registry: Option<PathBuf>,
    pub features: PathBuf,
    pub workers: usize,
    pub hidden: [usize; 4],
    pub dropout: f64,
    pub model: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub optimizer: OptimizerKind,
    pub report: PathBuf,
    pub format: ReportFormat,
    pub csv: Option<PathBuf>,
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text)
        .map_err(|e| anyhow::Error::new(crate::ValidationError(format!("config {}: {e}", path.display()))))
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let defaults = actionsense::TrainConfig::default();
        let decoder = actionsense::frames::DecoderConfig::default();
        let ratios = match args.ratios {
            Some(r) => r,
            None => match file.dataset.ratios {
                Some([a, b, c]) => SplitRatios::new(a, b, c).map_err(validation)?,
                None => SplitRatios::default(),
            },
        };
        let cfg = Self {
            seed: args.seed.or(file.seed).unwrap_or(0),
            manifest: pick(&args.manifest, &file.dataset.manifest, "manifest.jsonl".into()),
            ratios: ratios.0,
            fps: args.fps.or(file.dataset.fps).unwrap_or(actionsense::frames::DEFAULT_FPS),
            decoder: pick(&args.decoder, &file.dataset.decoder, decoder.command),
            backbone: pick(&args.backbone, &file.backbone.name, "stub".into()),
            registry: args.registry.clone().or(file.backbone.registry),
            features: pick(&args.features, &file.backbone.features, "features".into()),
            workers: args
                .workers
                .or(file.backbone.workers)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
            hidden: file.head.hidden.unwrap_or(HeadConfig::DEFAULT_HIDDEN),
            dropout: file.head.dropout.unwrap_or(HeadConfig::DEFAULT_DROPOUT),
            model: pick(&args.model, &file.head.model, "model".into()),
            epochs: args.epochs.or(file.train.epochs).unwrap_or(defaults.epochs),
            batch_size: args.batch_size.or(file.train.batch_size).unwrap_or(defaults.batch_size),
            lr: args.lr.or(file.train.lr).unwrap_or(defaults.learning_rate),
            patience: file.train.patience.unwrap_or(defaults.early_stop_patience),
            optimizer: file.train.optimizer.unwrap_or_default(),
            report: pick(&args.report, &file.eval.report, "report.json".into()),
            format: args.format.or(file.eval.format).unwrap_or_default(),
            csv: file.eval.csv,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.fps == 0 {
            bail!(crate::ValidationError("fps must be positive".into()));
        }
        if self.workers == 0 {
            bail!(crate::ValidationError("workers must be positive".into()));
        }
        if self.batch_size == 0 {
            bail!(crate::ValidationError("batch size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            bail!(crate::ValidationError(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios(self.ratios)
    }

    /// Writes the resolved settings as `run-config.json` into `dir`.
    pub fn echo(&self, dir: &Path, command: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Echo<'a> {
            command: &'a str,
            #[serde(flatten)]
            config: &'a RunConfig,
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("run-config.json");
        let mut text = serde_json::to_string_pretty(&Echo { command, config: self })?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

fn validation(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow::Error::new(crate::ValidationError(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(
            &path,
            "seed = 5\n[train]\nepochs = 7\nbatch_size = 4\n[backbone]\nname = \"vgg16\"\n[head]\nhidden = [8, 8, 8, 8]\n",
        )
        .unwrap();
        let args = CommonArgs {
            config: Some(path),
            epochs: Some(3),
            ..CommonArgs::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.backbone, "vgg16");
        assert_eq!(cfg.hidden, [8; 4]);
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.fps, 30);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[train]\nepoch = 7\n").unwrap();
        let err = RunConfig::resolve(&CommonArgs {
            config: Some(path),
            ..CommonArgs::default()
        })
        .unwrap_err();
        assert!(err.downcast_ref::<crate::ValidationError>().is_some());
    }
}
