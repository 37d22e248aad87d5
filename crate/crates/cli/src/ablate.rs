//! Ablation sweeps: time-encoding and pre-training variants, context length
//! and recurrent architecture.

use std::path::PathBuf;
use std::str::FromStr;

use forecastad::eval::EvalReport;
use forecastad::model::{ModelConfig, PreprocessStats};
use forecastad::{Checkpoint, Detector, Split};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::load_split;
use crate::error::{CliError, CliResult};
use crate::layout::{record_config, require, write_json, Layout};
use crate::models::{fit_forecaster, model_config, training_stats};
use crate::scoring::{build_report, evaluate_rows, save_report, score_rows, write_scores};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Time,
    K,
    Arch,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Time => "time",
            Sweep::K => "k",
            Sweep::Arch => "arch",
        }
    }
}

impl FromStr for Sweep {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "time" => Ok(Sweep::Time),
            "k" => Ok(Sweep::K),
            "arch" => Ok(Sweep::Arch),
            other => Err(CliError::config(format!("unknown sweep `{other}` (time, k, arch)"))),
        }
    }
}

/// One point of a sweep: the experiment config it trains under.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub cfg: ExperimentConfig,
}

pub fn variants(cfg: &ExperimentConfig, sweep: Sweep) -> CliResult<Vec<Variant>> {
    let mut out = Vec::new();
    match sweep {
        Sweep::Time => {
            for name in &cfg.ablate.time_variants {
                let mut v = cfg.clone();
                let t = &mut v.train;
                match name.as_str() {
                    "full" => {}
                    "no_tau" => t.use_tau = false,
                    "no_delta" => t.use_delta = false,
                    "no_time" => (t.use_tau, t.use_delta) = (false, false),
                    "no_pretrain" => t.use_pretrained = false,
                    other => return Err(CliError::config(format!("unknown time variant `{other}`"))),
                }
                out.push(Variant { name: name.clone(), cfg: v });
            }
        }
        Sweep::K => {
            for &k in &cfg.ablate.k_values {
                let mut v = cfg.clone();
                v.core.k = k;
                out.push(Variant { name: format!("k{k}"), cfg: v });
            }
        }
        Sweep::Arch => {
            for &layers in &cfg.ablate.lstm_layers {
                for &dim in &cfg.ablate.latent_dims {
                    let mut v = cfg.clone();
                    v.model.lstm_layers = layers;
                    v.model.latent_dim = dim;
                    out.push(Variant { name: format!("l{layers}_d{dim}"), cfg: v });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::config(format!("the {} sweep has no variants", sweep.name())));
    }
    for v in &out {
        v.cfg.validate()?;
    }
    Ok(out)
}

/// First checkpoint among `paths` that was trained under exactly `config`.
fn reusable(paths: &[PathBuf], config: &ModelConfig) -> CliResult<Option<Checkpoint>> {
    for p in paths.iter().filter(|p| p.exists()) {
        let ckpt = Checkpoint::load(p)?;
        if &ckpt.config == config {
            log::info!("reusing {}", p.display());
            return Ok(Some(ckpt));
        }
    }
    Ok(None)
}

fn pretrained_for(
    base: &ExperimentConfig,
    variant: &Variant,
    sweep: Sweep,
    stats: PreprocessStats,
    seed: u64,
    split: &Split,
) -> CliResult<Checkpoint> {
    let layout = Layout::new(&base.out_dir);
    let main = layout.pretrained(seed);
    if sweep != Sweep::Arch {
        require(&main, "pre-trained checkpoint", "pretrain")?;
        return Ok(Checkpoint::load(&main)?);
    }
    let config = model_config(&variant.cfg, stats, seed);
    let own = layout.ablation_checkpoint(seed, sweep.name(), &format!("{}-pretrain", variant.name));
    if let Some(ckpt) = reusable(&[main, own.clone()], &config)? {
        return Ok(ckpt);
    }
    let mut model = Detector::new(config)?;
    model.pretrain(&split.train)?;
    let ckpt = model.checkpoint();
    ckpt.save(&own)?;
    Ok(ckpt)
}

fn run_variant(base: &ExperimentConfig, sweep: Sweep, variant: &Variant, split: &Split) -> CliResult<EvalReport> {
    let layout = Layout::new(&base.out_dir);
    let stats = training_stats(split)?;
    let dir = layout.ablation(sweep.name());
    let evaluations = base
        .eval
        .seeds
        .par_iter()
        .map(|&seed| {
            let config = model_config(&variant.cfg, stats, seed);
            let own = layout.ablation_checkpoint(seed, sweep.name(), &variant.name);
            let model = match reusable(&[layout.forecaster(seed), own.clone()], &config)? {
                Some(ckpt) => Detector::from_checkpoint(&ckpt)?,
                None => {
                    let pretrained = if variant.cfg.train.use_pretrained {
                        Some(pretrained_for(base, variant, sweep, stats, seed, split)?)
                    } else {
                        None
                    };
                    let (model, report) = fit_forecaster(config, pretrained.as_ref(), &split.train)?;
                    model.checkpoint().save(&own)?;
                    log::info!(
                        "{} seed {seed}: loss {:.3} -> {:.3}",
                        variant.name,
                        report.initial_loss,
                        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
                    );
                    model
                }
            };
            let rows = score_rows(split, |d| Ok(model.score_day(d)?))?;
            let csv = dir.join("scores").join(&variant.name).join(format!("seed-{seed}.csv"));
            write_scores(&csv, &variant.name, seed, &variant.cfg.hash(), &rows)?;
            evaluate_rows(seed, &rows)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = build_report(&variant.cfg, [(variant.name.clone(), evaluations)]);
    save_report(&report, &dir, &variant.name)?;
    Ok(report)
}

/// Trains and evaluates every variant of the sweep; one report per variant
/// plus a combined summary.
pub fn ablate(cfg: &ExperimentConfig, sweep: Sweep) -> CliResult<Vec<(String, EvalReport)>> {
    let layout = Layout::new(&cfg.out_dir);
    let split = load_split(cfg)?;
    let mut reports = Vec::new();
    for v in variants(cfg, sweep)? {
        log::info!("ablation {}: variant {}", sweep.name(), v.name);
        let report = run_variant(cfg, sweep, &v, &split)?;
        reports.push((v.name, report));
    }
    let dir = layout.ablation(sweep.name());
    let mut summary = build_report(cfg, Vec::new());
    for (name, r) in &reports {
        summary.detectors.extend(r.detectors.clone().into_iter().map(|(_, d)| (name.clone(), d)));
    }
    let table = save_report(&summary, &dir, "summary")?;
    write_json(&dir.join("variants.json"), &reports.iter().map(|(n, _)| n).collect::<Vec<_>>())?;
    record_config(cfg, &dir)?;
    println!("{table}");
    Ok(reports)
}
