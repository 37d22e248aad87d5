//! Dataset stages: simulation, labelling and the train/validation/test split.

use std::path::Path;

use forecastad::data::format::{read_day, write_day};
use forecastad::data::{DayId, DroppedDay, Label, Manifest};
use forecastad::label::{label_dataset, RuleReport};
use forecastad::simulate::simulate_day;
use forecastad::{Day, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LabelSource};
use crate::error::{CliError, CliResult};
use crate::layout::{record_config, require_dataset, write_json, Layout};

pub fn load_days(dir: &Path, ids: &[DayId]) -> CliResult<Vec<Day>> {
    ids.par_iter().map(|id| read_day::<f32>(dir, id).map_err(CliError::from)).collect()
}

fn store_days(dir: &Path, days: &[Day], manifest: &Manifest) -> CliResult<()> {
    days.par_iter().try_for_each(|d| write_day(dir, d, manifest.height, manifest.width).map(|_| ()))?;
    manifest.save(dir)?;
    Ok(())
}

pub fn simulate(cfg: &ExperimentConfig) -> CliResult<Manifest> {
    let layout = Layout::new(&cfg.out_dir);
    let days = (0..cfg.days as u64)
        .into_par_iter()
        .map(|i| simulate_day::<f32>(&cfg.sim, i))
        .collect::<forecastad::Result<Vec<Day>>>()?;
    let manifest = Manifest {
        days: days.iter().map(|d| d.day_id.clone()).collect(),
        height: cfg.sim.height,
        width: cfg.sim.width,
        simulated: true,
        config_hash: Some(cfg.hash()),
        seed: Some(cfg.sim.seed),
        ..Default::default()
    };
    let dir = layout.raw();
    store_days(&dir, &days, &manifest)?;
    record_config(cfg, &dir)?;
    let anomalous = days.iter().filter(|d| d.samples.iter().any(|s| s.anomaly_kind.is_some())).count();
    let samples: usize = days.iter().map(Day::len).sum();
    log::info!("simulated {} days ({samples} frames, {anomalous} days with anomalies) into {}", days.len(), dir.display());
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelArtifact {
    pub config_hash: String,
    pub sim_seed: Option<u64>,
    pub report: RuleReport,
}

pub fn label(cfg: &ExperimentConfig) -> CliResult<LabelArtifact> {
    let layout = Layout::new(&cfg.out_dir);
    let raw = layout.raw();
    require_dataset(&raw, "simulated dataset", "simulate")?;
    let source = Manifest::load(&raw)?;
    let days = load_days(&raw, &source.days)?;
    let outcome = label_dataset(days, &cfg.label)?;
    let manifest = Manifest {
        days: outcome.days.iter().map(|d| d.day_id.clone()).collect(),
        dropped: outcome
            .dropped
            .iter()
            .map(|(day, reason)| DroppedDay { day: day.clone(), reason: reason.as_str().to_owned() })
            .collect(),
        config_hash: Some(cfg.hash()),
        ..source
    };
    let dir = layout.labelled();
    store_days(&dir, &outcome.days, &manifest)?;
    let artifact = LabelArtifact { config_hash: cfg.hash(), sim_seed: manifest.seed, report: outcome.report };
    write_json(&layout.label_report(), &artifact)?;
    record_config(cfg, &dir)?;
    let r = &artifact.report;
    log::info!(
        "labelled {} samples: {} anomalous, {} days dropped, agreement with truth {}",
        r.samples,
        r.anomalous,
        r.days_dropped.len(),
        r.label_agreement.map_or("n/a".to_owned(), |a| format!("{a:.4}"))
    );
    Ok(artifact)
}

/// Rewrites `y` from the simulator ground truth when that is the configured
/// label source; rule labels are what the day files already hold.
pub fn apply_label_source(days: &mut [Day], source: LabelSource, simulated: bool) -> CliResult<()> {
    match source {
        LabelSource::Rules => Ok(()),
        LabelSource::Truth if !simulated => {
            Err(CliError::config("eval.labels = truth needs a simulated dataset; use `rules`"))
        }
        LabelSource::Truth => {
            for s in days.iter_mut().flat_map(|d| d.samples.iter_mut()) {
                s.y = Label::from_flag(s.anomaly_kind.is_some());
            }
            Ok(())
        }
    }
}

/// Days with an anomaly are dealt alternately to validation and test; the
/// all-normal days are divided into a leading training share and equal
/// validation and test parts, in day order.
pub fn assign_days(days: &[Day], train_fraction: f64) -> CliResult<(Vec<DayId>, Vec<DayId>, Vec<DayId>)> {
    let (clean, anomalous): (Vec<&Day>, Vec<&Day>) = days.iter().partition(|d| !d.has_anomaly());
    let n_train = ((clean.len() as f64 * train_fraction).floor() as usize).max(1);
    if clean.len() < n_train {
        return Err(CliError::config(
            "no all-normal days to train on; raise sim.clean_day_fraction or days",
        ));
    }
    let n_val = (clean.len() - n_train) / 2;
    let ids = |ds: &[&Day]| ds.iter().map(|d| d.day_id.clone()).collect::<Vec<_>>();
    let train = ids(&clean[..n_train]);
    let mut validation = ids(&clean[n_train..n_train + n_val]);
    let mut test = ids(&clean[n_train + n_val..]);
    for (i, d) in anomalous.iter().enumerate() {
        if i % 2 == 0 {
            validation.push(d.day_id.clone());
        } else {
            test.push(d.day_id.clone());
        }
    }
    Ok((train, validation, test))
}

pub fn split(cfg: &ExperimentConfig) -> CliResult<Manifest> {
    let layout = Layout::new(&cfg.out_dir);
    let labelled = layout.labelled();
    require_dataset(&labelled, "labelled dataset", "label")?;
    let source = Manifest::load(&labelled)?;
    let mut days = load_days(&labelled, &source.days)?;
    apply_label_source(&mut days, cfg.eval.labels, source.simulated)?;
    let (train, validation, test) = assign_days(&days, cfg.split.train_fraction)?;
    let manifest = Manifest {
        train,
        validation,
        test,
        setup: Some(cfg.split.setup),
        config_hash: Some(cfg.hash()),
        ..source
    };
    let dir = layout.split();
    manifest.save(&dir)?;
    record_config(cfg, &dir)?;
    log::info!(
        "{} split: {} train, {} validation, {} test days",
        cfg.split.setup,
        manifest.train.len(),
        manifest.validation.len(),
        manifest.test.len()
    );
    Ok(manifest)
}

/// The split with the setup's segment restriction applied, as every
/// training and scoring command sees it.
pub fn load_split(cfg: &ExperimentConfig) -> CliResult<Split> {
    let layout = Layout::new(&cfg.out_dir);
    let dir = layout.split();
    require_dataset(&dir, "dataset split", "split")?;
    let manifest = Manifest::load(&dir)?;
    if manifest.setup != Some(cfg.split.setup) {
        return Err(CliError::config(format!(
            "the split on disk was made for {:?} but split.setup is {}; rerun `forecastad split`",
            manifest.setup, cfg.split.setup
        )));
    }
    let labelled = layout.labelled();
    let load = |ids: &[DayId]| -> CliResult<Vec<Day>> {
        let mut days = load_days(&labelled, ids)?;
        apply_label_source(&mut days, cfg.eval.labels, manifest.simulated)?;
        Ok(days)
    };
    let split = Split::from_days(load(&manifest.train)?, load(&manifest.validation)?, load(&manifest.test)?, cfg.split.setup)?;
    Ok(split)
}
