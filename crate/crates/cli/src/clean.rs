//! Removal of deployment samples whose context embedding lies far from every
//! training embedding.

use forecastad::data::Manifest;
use forecastad::eval::{clean_deployment, loo_threshold};
use forecastad::model::InferenceOptions;
use forecastad::stats::percentile;
use forecastad::{Day, Detector};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{apply_label_source, load_days, load_split};
use crate::error::{CliError, CliResult};
use crate::layout::{record_config, require_dataset, write_json, Layout};
use crate::models::load_checkpoint;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemovedSample {
    pub day_id: String,
    pub timestamp: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleaningReport {
    pub config_hash: String,
    pub seed: u64,
    pub threshold: f64,
    pub candidates: usize,
    pub kept: usize,
    pub removed: Vec<RemovedSample>,
    /// Distance quantiles at 0, 25, 50, 75, 95, 99 and 100 %.
    pub distance_quantiles: Vec<(f64, f64)>,
}

/// Context embeddings of every sample of `days` that passes `keep`.
fn contexts(model: &Detector, days: &[Day], keep: impl Fn(&forecastad::data::Sample<f32>) -> bool) -> CliResult<Vec<(String, f64, Vec<f64>)>> {
    let opts = InferenceOptions { keep_contexts: true, ..Default::default() };
    let mut out = Vec::new();
    for day in days {
        let inf = model.infer_day(day, opts)?;
        for (s, c) in day.samples.iter().zip(inf.contexts) {
            if keep(s) {
                out.push((day.day_id.0.clone(), s.t, c.into_iter().map(f64::from).collect()));
            }
        }
    }
    Ok(out)
}

pub fn clean(cfg: &ExperimentConfig) -> CliResult<CleaningReport> {
    let layout = Layout::new(&cfg.out_dir);
    let split = load_split(cfg)?;
    let seed = cfg.eval.seeds[0];
    let model = load_checkpoint(&layout.forecaster(seed), "forecaster checkpoint", "train")?;
    let deployment = match &cfg.cleaning.deployment_dir {
        Some(dir) => {
            require_dataset(dir, "deployment dataset", "simulate")?;
            let m = Manifest::load(dir)?;
            let mut days = load_days(dir, &m.active_days())?;
            apply_label_source(&mut days, cfg.eval.labels, m.simulated)?;
            days
        }
        None => split.test.clone(),
    };
    let train = contexts(&model, &split.train, |_| true)?;
    if train.is_empty() {
        return Err(CliError::config("the training set is empty; nothing to compare against"));
    }
    let candidates = contexts(&model, &deployment, |s| !s.y.is_anomalous())?;
    let reference: Vec<Vec<f64>> = train.into_iter().map(|c| c.2).collect();
    let queries: Vec<Vec<f64>> = candidates.iter().map(|c| c.2.clone()).collect();
    let threshold = match cfg.cleaning.threshold {
        Some(t) => t,
        None => loo_threshold(&reference, cfg.cleaning.percentile)?,
    };
    let outcome = clean_deployment(&queries, &reference, Some(threshold))?;
    let removed = outcome
        .removed
        .iter()
        .map(|&i| RemovedSample { day_id: candidates[i].0.clone(), timestamp: candidates[i].1, distance: outcome.distances[i] })
        .collect();
    let distance_quantiles = [0.0, 25.0, 50.0, 75.0, 95.0, 99.0, 100.0]
        .into_iter()
        .filter_map(|p| percentile(&outcome.distances, p).map(|v| (p, v)))
        .collect();
    let report = CleaningReport {
        config_hash: cfg.hash(),
        seed,
        threshold: outcome.threshold,
        candidates: candidates.len(),
        kept: outcome.kept.len(),
        removed,
        distance_quantiles,
    };
    let dir = layout.cleaning();
    write_json(&dir.join("report.json"), &report)?;
    record_config(cfg, &dir)?;
    log::info!(
        "cleaning: kept {} of {} deployment normals (threshold {:.4})",
        report.kept,
        report.candidates,
        report.threshold
    );
    Ok(report)
}
