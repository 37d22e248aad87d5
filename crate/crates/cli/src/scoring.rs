//! Detector scores on the validation and test days, their CSV files, and the
//! evaluation report built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use forecastad::baselines::{feature_scores, FeatureBaseline};
use forecastad::data::{DayId, Segment};
use forecastad::eval::{evaluate_scores, DetectorReport, EvalReport, ScoredSample, SeedEvaluation};
use forecastad::{Day, Detector, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::load_split;
use crate::error::{CliError, CliResult};
use crate::layout::{record_config, write_bytes, write_json, Layout};
use crate::models::load_checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Forecaster,
    Autoencoder,
    Feature(FeatureBaseline),
}

impl DetectorKind {
    pub fn all() -> Vec<DetectorKind> {
        let mut out = vec![DetectorKind::Forecaster, DetectorKind::Autoencoder];
        out.extend(FeatureBaseline::ALL.map(DetectorKind::Feature));
        out
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Forecaster => "forecastad",
            DetectorKind::Autoencoder => "autoencoder",
            DetectorKind::Feature(k) => k.name(),
        }
    }
}

/// One line of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub set: String,
    pub day_id: String,
    pub timestamp: f64,
    pub segment: String,
    pub anomalous: u8,
    pub score: f64,
}

fn segment_name(s: Segment) -> &'static str {
    match s {
        Segment::S => "S",
        Segment::M => "M",
        Segment::E => "E",
        Segment::Unassigned => "-",
    }
}

fn parse_segment(s: &str) -> CliResult<Segment> {
    match s {
        "S" => Ok(Segment::S),
        "M" => Ok(Segment::M),
        "E" => Ok(Segment::E),
        "-" => Ok(Segment::Unassigned),
        other => Err(CliError::Other(format!("unknown segment `{other}` in score file"))),
    }
}

impl ScoreRow {
    pub fn to_scored(&self) -> CliResult<ScoredSample> {
        Ok(ScoredSample {
            day_id: DayId(self.day_id.clone()),
            timestamp: self.timestamp,
            score: self.score,
            anomalous: self.anomalous == 1,
            segment: parse_segment(&self.segment)?,
        })
    }
}

/// Validation rows followed by test rows, in day and time order.
pub fn score_rows(split: &Split, score: impl Fn(&Day) -> CliResult<Vec<f64>>) -> CliResult<Vec<ScoreRow>> {
    let mut rows = Vec::new();
    for (set, days) in [("validation", &split.validation), ("test", &split.test)] {
        for day in days {
            let scores = score(day)?;
            for (s, score) in day.samples.iter().zip(scores) {
                rows.push(ScoreRow {
                    set: set.to_owned(),
                    day_id: day.day_id.0.clone(),
                    timestamp: s.t,
                    segment: segment_name(s.segment).to_owned(),
                    anomalous: s.y.is_anomalous() as u8,
                    score,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_scores(path: &Path, detector: &str, seed: u64, config_hash: &str, rows: &[ScoreRow]) -> CliResult<()> {
    let mut bytes = format!("# detector={detector} seed={seed} config_hash={config_hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Other(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_bytes(path, &bytes)
}

pub fn read_scores(path: &Path) -> CliResult<Vec<ScoreRow>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::Other(format!("{}: {e}", path.display()))))
        .collect()
}

/// Splits rows into the validation and test sample sets.
pub fn scored_sets(rows: &[ScoreRow]) -> CliResult<(Vec<ScoredSample>, Vec<ScoredSample>)> {
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for r in rows {
        match r.set.as_str() {
            "validation" => validation.push(r.to_scored()?),
            "test" => test.push(r.to_scored()?),
            other => return Err(CliError::Other(format!("unknown set `{other}` in score file"))),
        }
    }
    Ok((validation, test))
}

pub fn evaluate_rows(seed: u64, rows: &[ScoreRow]) -> CliResult<SeedEvaluation> {
    let (validation, test) = scored_sets(rows)?;
    Ok(evaluate_scores(seed, &validation, &test)?)
}

/// Scores of `kind` for one seed, computed from the checkpoints on disk.
pub fn detector_rows(cfg: &ExperimentConfig, split: &Split, kind: DetectorKind, seed: u64) -> CliResult<Vec<ScoreRow>> {
    let layout = Layout::new(&cfg.out_dir);
    match kind {
        DetectorKind::Forecaster => {
            let model = load_checkpoint(&layout.forecaster(seed), "forecaster checkpoint", "train")?;
            score_rows(split, |d| Ok(model.score_day(d)?))
        }
        DetectorKind::Autoencoder => {
            let model = load_checkpoint(&layout.pretrained(seed), "pre-trained checkpoint", "pretrain")?;
            score_rows(split, |d| Ok(model.reconstruction_errors(d)?))
        }
        DetectorKind::Feature(k) => score_rows(split, |d| Ok(feature_scores(d, k))),
    }
}

/// Per-seed score rows of every detector, written as CSV files.
pub fn score_all(cfg: &ExperimentConfig, split: &Split) -> CliResult<BTreeMap<&'static str, Vec<(u64, Vec<ScoreRow>)>>> {
    let layout = Layout::new(&cfg.out_dir);
    let hash = cfg.hash();
    let mut out = BTreeMap::new();
    for kind in DetectorKind::all() {
        let per_seed: Vec<(u64, Vec<ScoreRow>)> = match kind {
            // Seed-independent: score once and reuse.
            DetectorKind::Feature(_) => {
                let rows = detector_rows(cfg, split, kind, cfg.eval.seeds[0])?;
                cfg.eval.seeds.iter().map(|&s| (s, rows.clone())).collect()
            }
            _ => cfg
                .eval
                .seeds
                .par_iter()
                .map(|&seed| Ok((seed, detector_rows(cfg, split, kind, seed)?)))
                .collect::<CliResult<_>>()?,
        };
        for (seed, rows) in &per_seed {
            write_scores(&layout.score_csv(kind.name(), *seed), kind.name(), *seed, &hash, rows)?;
        }
        out.insert(kind.name(), per_seed);
    }
    record_config(cfg, &layout.scores())?;
    Ok(out)
}

pub fn build_report(
    cfg: &ExperimentConfig,
    detectors: impl IntoIterator<Item = (String, Vec<SeedEvaluation>)>,
) -> EvalReport {
    EvalReport {
        setup: cfg.split.setup,
        label_source: cfg.eval.labels.to_string(),
        detectors: detectors.into_iter().map(|(name, seeds)| (name, DetectorReport::from_seeds(seeds))).collect(),
        config_hash: Some(cfg.hash()),
        seeds: cfg.eval.seeds.clone(),
    }
}

pub fn save_report(report: &EvalReport, dir: &Path, stem: &str) -> CliResult<String> {
    write_json(&dir.join(format!("{stem}.json")), report)?;
    let mut table = report.render_table();
    let _ = writeln!(table, "config_hash {}", report.config_hash.as_deref().unwrap_or("-"));
    write_bytes(&dir.join(format!("{stem}.txt")), table.as_bytes())?;
    Ok(table)
}

pub fn evaluate(cfg: &ExperimentConfig) -> CliResult<EvalReport> {
    let layout = Layout::new(&cfg.out_dir);
    let split = load_split(cfg)?;
    let scores = score_all(cfg, &split)?;
    let detectors = scores
        .into_iter()
        .map(|(name, per_seed)| {
            let evals = per_seed.iter().map(|(seed, rows)| evaluate_rows(*seed, rows)).collect::<CliResult<Vec<_>>>()?;
            Ok((name.to_owned(), evals))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = build_report(cfg, detectors);
    let table = save_report(&report, &layout.reports(), "eval")?;
    record_config(cfg, &layout.reports())?;
    println!("{table}");
    Ok(report)
}

/// The score command: CSV files for every detector plus anomaly-map panels
/// of the best-scoring anomalous test samples of each forecaster.
pub fn score(cfg: &ExperimentConfig) -> CliResult<()> {
    let layout = Layout::new(&cfg.out_dir);
    let split = load_split(cfg)?;
    score_all(cfg, &split)?;
    for &seed in &cfg.eval.seeds {
        let model: Detector = load_checkpoint(&layout.forecaster(seed), "forecaster checkpoint", "train")?;
        let panels = crate::maps::top_anomalies(&model, &split, cfg.eval.map_samples)?;
        crate::maps::write_panels(&layout.maps(seed), &panels, seed, &cfg.hash())?;
    }
    Ok(())
}
