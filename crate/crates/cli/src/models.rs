//! Pre-training, forecaster training and loading trained detectors.

use std::path::Path;

use forecastad::model::{ModelConfig, PreprocessStats, TrainConfig, TrainReport};
use forecastad::{Checkpoint, Day, Detector, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::load_split;
use crate::error::CliResult;
use crate::layout::{record_config, require, write_json, Layout};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainArtifact {
    pub config_hash: String,
    pub seed: u64,
    pub stage: String,
    pub report: TrainReport,
    pub seconds: f64,
}

pub fn model_config(cfg: &ExperimentConfig, stats: PreprocessStats, seed: u64) -> ModelConfig {
    ModelConfig {
        spec: cfg.model.clone(),
        core: cfg.core,
        train: TrainConfig { seed, ..cfg.train.clone() },
        stats,
    }
}

pub fn training_stats(split: &Split) -> CliResult<PreprocessStats> {
    Ok(PreprocessStats::from_days(&split.train)?)
}

pub fn load_checkpoint(path: &Path, what: &'static str, producer: &'static str) -> CliResult<Detector> {
    require(path, what, producer)?;
    let ckpt = Checkpoint::load(path)?;
    Ok(Detector::from_checkpoint(&ckpt)?)
}

/// Fits a forecaster, starting from `pretrained` when one is given.
pub fn fit_forecaster(config: ModelConfig, pretrained: Option<&Checkpoint>, days: &[Day]) -> CliResult<(Detector, TrainReport)> {
    let mut model = match pretrained {
        Some(ckpt) => Detector::from_pretrained(config, ckpt)?,
        None => Detector::new(config)?,
    };
    let report = model.train(days)?;
    Ok((model, report))
}

fn log_report(stage: &str, seed: u64, r: &TrainReport, seconds: f64) {
    log::info!(
        "seed {seed}: {stage} loss {:.3} -> {:.3} in {seconds:.1}s",
        r.initial_loss,
        r.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
}

pub fn pretrain(cfg: &ExperimentConfig) -> CliResult<Vec<TrainArtifact>> {
    let layout = Layout::new(&cfg.out_dir);
    let split = load_split(cfg)?;
    let stats = training_stats(&split)?;
    let out = cfg
        .eval
        .seeds
        .par_iter()
        .map(|&seed| {
            let clock = std::time::Instant::now();
            let mut model = Detector::new(model_config(cfg, stats, seed))?;
            let report = model.pretrain(&split.train)?;
            model.checkpoint().save(&layout.pretrained(seed))?;
            let seconds = clock.elapsed().as_secs_f64();
            log_report("pretrain", seed, &report, seconds);
            let artifact = TrainArtifact { config_hash: cfg.hash(), seed, stage: "pretrain".into(), report, seconds };
            write_json(&layout.seed_dir(seed).join("pretrain_report.json"), &artifact)?;
            Ok(artifact)
        })
        .collect::<CliResult<Vec<_>>>()?;
    record_config(cfg, &layout.models())?;
    Ok(out)
}

pub fn train(cfg: &ExperimentConfig) -> CliResult<Vec<TrainArtifact>> {
    let layout = Layout::new(&cfg.out_dir);
    let split = load_split(cfg)?;
    let stats = training_stats(&split)?;
    let out = cfg
        .eval
        .seeds
        .par_iter()
        .map(|&seed| {
            let clock = std::time::Instant::now();
            let pretrained = if cfg.train.use_pretrained {
                let path = layout.pretrained(seed);
                require(&path, "pre-trained checkpoint", "pretrain")?;
                Some(Checkpoint::load(&path)?)
            } else {
                None
            };
            let (model, report) = fit_forecaster(model_config(cfg, stats, seed), pretrained.as_ref(), &split.train)?;
            model.checkpoint().save(&layout.forecaster(seed))?;
            let seconds = clock.elapsed().as_secs_f64();
            log_report("train", seed, &report, seconds);
            let artifact = TrainArtifact { config_hash: cfg.hash(), seed, stage: "train".into(), report, seconds };
            write_json(&layout.seed_dir(seed).join("train_report.json"), &artifact)?;
            Ok(artifact)
        })
        .collect::<CliResult<Vec<_>>>()?;
    record_config(cfg, &layout.models())?;
    Ok(out)
}
