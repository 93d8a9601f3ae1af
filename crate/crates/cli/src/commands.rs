use std::collections::HashMap;
use std::fs;
use std::path::Path;

use actionsense::backbone::{
    extract_features, fit_feature_normalizer, load_backbone, Backbone, BackboneRegistry, FeatureCache,
    TaggedFeature,
};
use actionsense::dataset::{load_manifest, split_dataset, DatasetError};
use actionsense::evaluator::{classify_video, render_report, EvaluationReport, ReportFormat, VideoDecision};
use actionsense::frames::{frame_tensors, DecoderConfig};
use actionsense::head::{load_model, save_model};
use actionsense::seed::{derive_seed, STREAM_HEAD_INIT, STREAM_SPLIT, STREAM_TRAIN};
use actionsense::synthetic::{write_clip_dataset, ClipSpec};
use actionsense::trainer::train;
use actionsense::{DatasetManifest, FeatureVector, HeadConfig, HeadModel, Split, TrainConfig};
use anyhow::{Context, Result};
use rayon::prelude::*;

use crate::config::{CommonArgs, RunConfig};
use crate::{Command, ValidationError};

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ValidationError(msg.into()))
}

pub fn run(command: Command, args: &CommonArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args)?;
    match command {
        Command::Prepare => prepare(&cfg),
        Command::Extract => extract(&cfg),
        Command::Train => train_head(&cfg),
        Command::Evaluate => evaluate(&cfg),
        Command::Predict { input, input_fps } => predict(&cfg, &input, input_fps),
        Command::Report { csv } => report(&cfg, csv.as_deref()),
        Command::Synth {
            out,
            clips_per_class,
            seconds,
        } => synth(&cfg, &out, clips_per_class, seconds),
    }
}

fn decoder(cfg: &RunConfig) -> DecoderConfig {
    DecoderConfig {
        command: cfg.decoder.clone(),
        ..DecoderConfig::default()
    }
}

fn resolve_backbone(cfg: &RunConfig, name: &str) -> Result<Backbone> {
    let registry = match &cfg.registry {
        Some(p) => BackboneRegistry::load(p)?,
        None => BackboneRegistry::builtin(),
    };
    Ok(load_backbone(&registry.resolve(name)?)?)
}

fn prepare(cfg: &RunConfig) -> Result<()> {
    let manifest = load_manifest(&cfg.manifest)?;
    let split = split_dataset(&manifest, cfg.split_ratios(), derive_seed(cfg.seed, STREAM_SPLIT))?;
    split.save(&cfg.manifest)?;
    for s in Split::ASSIGNED {
        eprintln!("{s}: {} videos", split.records_in(s).count());
    }
    Ok(())
}

/// Loads a manifest that has been through `prepare`.
fn prepared_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let m = match load_manifest(&cfg.manifest) {
        Err(DatasetError::Io { path, .. }) if !path.exists() => {
            return Err(invalid(format!(
                "manifest {} not found; create it and run `actionsense prepare` first",
                path.display()
            )))
        }
        r => r?,
    };
    if !m.is_split() {
        return Err(invalid(format!(
            "manifest {} has no train/val/test split; run `actionsense prepare` first",
            cfg.manifest.display()
        )));
    }
    Ok(m)
}

/// Syncs split and label tags of cached rows with the manifest.
fn retag(cache: &mut FeatureCache, manifest: &DatasetManifest) {
    let tags: HashMap<&str, (Split, usize)> = manifest
        .records
        .iter()
        .map(|r| (r.video_id.as_str(), (r.split, manifest.label_index(r))))
        .collect();
    for e in &mut cache.entries {
        if let Some(&(split, label)) = tags.get(e.feature.video_id.as_str()) {
            e.split = split;
            e.feature.label_index = Some(label);
        }
    }
}

fn extract_video(
    backbone: &Backbone,
    manifest: &DatasetManifest,
    index: usize,
    cfg: &RunConfig,
    decoder: &DecoderConfig,
) -> Result<Vec<FeatureVector>> {
    let r = &manifest.records[index];
    let label = manifest.label_index(r);
    let tensors = frame_tensors(&r.video_id, &manifest.source_path(r), r.fps_hint, cfg.fps, decoder)
        .with_context(|| format!("video {}", r.video_id))?;
    tensors
        .iter()
        .map(|t| {
            let mut f = extract_features(backbone, t)?;
            f.label_index = Some(label);
            Ok(f)
        })
        .collect()
}

fn extract(cfg: &RunConfig) -> Result<()> {
    let manifest = load_manifest(&cfg.manifest)?;
    let backbone = resolve_backbone(cfg, &cfg.backbone)?;
    let key = backbone.preprocessing_key();
    let (mut cache, loaded) = if FeatureCache::exists(&cfg.features) {
        let c = FeatureCache::load(&cfg.features)?;
        if !c.matches(backbone.name(), &key) || c.dim != backbone.flat_len() {
            return Err(invalid(format!(
                "feature cache {} holds {}/{} features; pick another --features directory for {}/{}",
                cfg.features.display(),
                c.backbone,
                c.preprocessing,
                backbone.name(),
                key
            )));
        }
        (c.clone(), Some(c))
    } else {
        (FeatureCache::new(backbone.name(), key, backbone.flat_len()), None)
    };

    let todo: Vec<usize> = (0..manifest.records.len())
        .filter(|&i| !cache.has_video(&manifest.records[i].video_id))
        .collect();
    eprintln!(
        "extracting {} videos with {} ({} cached)",
        todo.len(),
        backbone.name(),
        manifest.records.len() - todo.len()
    );
    let dec = decoder(cfg);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let extracted: Vec<Vec<FeatureVector>> = pool.install(|| {
        todo.par_iter()
            .map(|&i| extract_video(&backbone, &manifest, i, cfg, &dec))
            .collect::<Result<_>>()
    })?;
    for features in extracted {
        cache.entries.extend(features.into_iter().map(|feature| TaggedFeature {
            feature,
            split: Split::Unassigned,
        }));
    }
    retag(&mut cache, &manifest);
    cache.canonicalize();
    if loaded.as_ref() != Some(&cache) {
        cache.save(&cfg.features)?;
    }
    cfg.echo(&cfg.features, "extract")?;
    eprintln!("{} feature rows in {}", cache.entries.len(), cfg.features.display());
    Ok(())
}

/// Cache rows of `split`, failing when a video of that split was never
/// extracted.
fn split_rows(cache: &FeatureCache, manifest: &DatasetManifest, split: Split) -> Result<Vec<TaggedFeature>> {
    for r in manifest.records_in(split) {
        if !cache.has_video(&r.video_id) {
            return Err(invalid(format!(
                "{split} video {} has no cached features; run `actionsense extract`",
                r.video_id
            )));
        }
    }
    Ok(cache.in_split(split).cloned().collect())
}

fn load_cache(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<FeatureCache> {
    if !FeatureCache::exists(&cfg.features) {
        return Err(invalid(format!(
            "no feature cache in {}; run `actionsense extract` first",
            cfg.features.display()
        )));
    }
    let mut cache = FeatureCache::load(&cfg.features)?;
    retag(&mut cache, manifest);
    Ok(cache)
}

fn train_head(cfg: &RunConfig) -> Result<()> {
    let manifest = prepared_manifest(cfg)?;
    let cache = load_cache(cfg, &manifest)?;
    let train_rows = split_rows(&cache, &manifest, Split::Train)?;
    let val_rows = split_rows(&cache, &manifest, Split::Val)?;
    let stats = fit_feature_normalizer(train_rows.iter().map(|t| &t.feature))?;
    let normalize = |rows: Vec<TaggedFeature>| -> Result<Vec<TaggedFeature>> {
        rows.into_iter()
            .map(|t| {
                Ok(TaggedFeature {
                    feature: actionsense::backbone::apply_feature_normalizer(&stats, &t.feature)?,
                    split: t.split,
                })
            })
            .collect()
    };
    let train_rows = normalize(train_rows)?;
    let val_rows = normalize(val_rows)?;

    let head_config = HeadConfig {
        hidden_widths: cfg.hidden,
        dropout_rate: cfg.dropout,
        seed: derive_seed(cfg.seed, STREAM_HEAD_INIT),
        ..HeadConfig::new(cache.dim, manifest.vocabulary.len())
    };
    let train_config = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.lr,
        early_stop_patience: cfg.patience,
        seed: derive_seed(cfg.seed, STREAM_TRAIN),
        optimizer: cfg.optimizer,
    };
    eprintln!(
        "training on {} frames ({} validation), dim {}",
        train_rows.len(),
        val_rows.len(),
        cache.dim
    );
    let (network, history) = train(&train_rows, &val_rows, &head_config, &train_config, |r| {
        eprintln!("{}", r.progress_line())
    })?;
    let model = HeadModel::new(network, manifest.vocabulary.clone(), stats, cache.backbone.clone())?;
    save_model(&model, &cfg.model)?;
    let path = cfg.model.join("history.json");
    let mut text = serde_json::to_string_pretty(&history)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    cfg.echo(&cfg.model, "train")?;
    if let Some(best) = history.best_epoch {
        eprintln!("kept epoch {best}; bundle in {}", cfg.model.display());
    }
    Ok(())
}

fn normalized(model: &HeadModel, features: impl IntoIterator<Item = FeatureVector>) -> Result<Vec<FeatureVector>> {
    Ok(features
        .into_iter()
        .map(|f| model.normalize(&f))
        .collect::<std::result::Result<_, _>>()?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn evaluate(cfg: &RunConfig) -> Result<()> {
    let manifest = prepared_manifest(cfg)?;
    let model = load_model(&cfg.model)?;
    let cache = load_cache(cfg, &manifest)?;
    model.check_features(&cache.backbone, cache.dim)?;
    if model.vocabulary != manifest.vocabulary {
        return Err(invalid(format!(
            "model labels {:?} differ from manifest labels {:?}",
            model.vocabulary.labels(),
            manifest.vocabulary.labels()
        )));
    }
    split_rows(&cache, &manifest, Split::Test)?;
    let mut outcomes = Vec::new();
    for r in manifest.records_in(Split::Test) {
        let frames = normalized(&model, cache.video(&r.video_id).into_iter().map(|t| t.feature.clone()))?;
        let decision = classify_video(&model, &r.video_id, &frames)?;
        outcomes.push((manifest.label_index(r), decision));
    }
    let report = EvaluationReport::from_decisions(&model.backbone_name, &model.vocabulary, outcomes)?;
    write_text(&cfg.report, &report.to_json())?;
    if let Some(csv) = &cfg.csv {
        write_text(csv, &report.confusion_csv())?;
    }
    let dir = cfg.report.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    cfg.echo(dir, "evaluate")?;
    print!("{}", render_report(&report, cfg.format));
    Ok(())
}

fn predict(cfg: &RunConfig, input: &Path, input_fps: Option<u32>) -> Result<()> {
    let model = load_model(&cfg.model)?;
    let backbone = resolve_backbone(cfg, &model.backbone_name)?;
    model.check_features(backbone.name(), backbone.flat_len())?;
    let video_id = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    let tensors = frame_tensors(&video_id, input, input_fps, cfg.fps, &decoder(cfg))?;
    let features = tensors
        .iter()
        .map(|t| extract_features(&backbone, t))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let decision = classify_video(&model, &video_id, &normalized(&model, features)?)?;
    match cfg.format {
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&decision)?),
        ReportFormat::Text => print!("{}", decision_text(&decision, model.vocabulary.labels())),
    }
    Ok(())
}

/// Label on the first line, then votes and mean probabilities.
fn decision_text(d: &VideoDecision, labels: &[String]) -> String {
    let votes: Vec<String> = d.vote_counts.iter().map(|v| v.to_string()).collect();
    let probs: Vec<String> = labels
        .iter()
        .zip(&d.mean_probabilities)
        .map(|(l, p)| format!("{l}={p:.6}"))
        .collect();
    let mut s = format!("{}\nvotes {}\nprobabilities {}\n", d.predicted_label, votes.join("/"), probs.join(" "));
    if d.tie_broken {
        s.push_str("tie broken by mean probability\n");
    }
    s
}

fn report(cfg: &RunConfig, csv: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(&cfg.report).with_context(|| format!("reading {}", cfg.report.display()))?;
    let report = EvaluationReport::from_json(&text)?;
    if let Some(csv) = csv.or(cfg.csv.as_deref()) {
        write_text(csv, &report.confusion_csv())?;
    }
    print!("{}", render_report(&report, cfg.format));
    Ok(())
}

fn synth(cfg: &RunConfig, out: &Path, clips_per_class: usize, seconds: u32) -> Result<()> {
    let spec = ClipSpec {
        clips_per_class,
        seconds,
        fps: cfg.fps,
        seed: cfg.seed,
        ..ClipSpec::default()
    };
    let path = write_clip_dataset(out, &spec)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
