//! Ranking metrics, threshold selection, per-setup evaluation and
//! deployment-set cleaning.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::data::{DayId, Segment, SetupTag};
use crate::error::{Error, Result};
use crate::stats::{mean_and_stderr, percentile};

fn undefined(metric: &'static str, reason: &str) -> Error {
    Error::UndefinedMetric { metric, reason: reason.to_owned() }
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y).count();
    (pos, labels.len() - pos)
}

/// Indices sorted by ascending score.
fn order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Area under the ROC curve via average ranks (ties count one half).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(undefined("auroc", "needs both classes"));
    }
    let idx = order(scores);
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Step-wise area under the precision-recall curve, sweeping thresholds
/// from the highest score down with tied scores entering together.
pub fn aupr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = class_counts(labels);
    if pos == 0 {
        return Err(undefined("aupr", "needs at least one anomalous sample"));
    }
    let mut idx = order(scores);
    idx.reverse();
    let (mut tp, mut fp, mut prev_recall, mut area) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

/// `s >= lambda` is anomalous.
pub fn classify(scores: &[f64], lambda: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= lambda).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(pred: &[bool], labels: &[bool]) -> Self {
        let mut c = Self::default();
        for (&p, &y) in pred.iter().zip(labels) {
            match (p, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.tp + self.fp + self.tn + self.fn_;
        if n == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }

    /// Geometric mean of specificity and recall.
    pub fn g_mean(&self) -> f64 {
        let tpr = if self.tp + self.fn_ == 0 { 0.0 } else { self.tp as f64 / (self.tp + self.fn_) as f64 };
        let tnr = if self.tn + self.fp == 0 { 0.0 } else { self.tn as f64 / (self.tn + self.fp) as f64 };
        (tpr * tnr).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    #[serde(with = "extended_f64")]
    pub lambda_f: f64,
    pub f1: f64,
    #[serde(with = "extended_f64")]
    pub lambda_g: f64,
    pub g_mean: f64,
    /// True when either criterion is maximised by an infinite sentinel,
    /// i.e. by flagging everything or nothing.
    pub degenerate: bool,
}

/// JSON has no infinities; the sentinel thresholds are written as the
/// strings `"inf"` and `"-inf"`.
mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            f64::INFINITY => s.serialize_str("inf"),
            f64::NEG_INFINITY => s.serialize_str("-inf"),
            v => s.serialize_f64(v),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("expected a number, \"inf\" or \"-inf\", got {other:?}"))),
            },
        }
    }
}

/// Candidate thresholds: `-inf`, midpoints of consecutive distinct scores, `+inf`.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = scores.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let mut out = Vec::with_capacity(u.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(u.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(f64::INFINITY);
    out
}

/// Maximises F1 and G-Mean over [`candidate_thresholds`]; ties go to the
/// smaller threshold.
pub fn select_thresholds(scores: &[f64], labels: &[bool]) -> Result<ThresholdChoice> {
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(undefined("threshold", "validation set needs both classes"));
    }
    let idx = order(scores);
    let candidates = candidate_thresholds(scores);
    // Sweep ascending: everything at or above the candidate is predicted anomalous.
    let mut below_pos = 0;
    let mut below_neg = 0;
    let mut cursor = 0;
    // Exact integer keys: F1 as the fraction 2tp / (2tp + fp + fn) and
    // G-Mean through tp * tn, since P and N are fixed. Float comparisons
    // could split ties between thresholds that are mathematically equal.
    let mut best_f: Option<(usize, usize, f64)> = None;
    let mut best_g: Option<(usize, f64)> = None;
    let mut best_f_c = Confusion::default();
    let mut best_g_c = Confusion::default();
    for &lambda in &candidates {
        while cursor < idx.len() && scores[idx[cursor]] < lambda {
            if labels[idx[cursor]] {
                below_pos += 1;
            } else {
                below_neg += 1;
            }
            cursor += 1;
        }
        let c = Confusion { tp: pos - below_pos, fn_: below_pos, fp: neg - below_neg, tn: below_neg };
        let (num, den) = (2 * c.tp, (2 * c.tp + c.fp + c.fn_).max(1));
        if best_f.is_none_or(|(n, d, _)| num * d > n * den) {
            best_f = Some((num, den, lambda));
            best_f_c = c;
        }
        let g = c.tp * c.tn;
        if best_g.is_none_or(|(b, _)| g > b) {
            best_g = Some((g, lambda));
            best_g_c = c;
        }
    }
    let (lambda_f, lambda_g) = (best_f.expect("candidates").2, best_g.expect("candidates").1);
    Ok(ThresholdChoice {
        lambda_f,
        f1: best_f_c.f1(),
        lambda_g,
        g_mean: best_g_c.g_mean(),
        degenerate: lambda_f.is_infinite() || lambda_g.is_infinite(),
    })
}

// ---------------------------------------------------------------------------
// Setups and reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub day_id: DayId,
    pub timestamp: f64,
    pub score: f64,
    pub anomalous: bool,
    pub segment: Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestSetup {
    #[serde(rename = "Ts#1")]
    Ts1,
    #[serde(rename = "Ts#2")]
    Ts2,
    #[serde(rename = "Ts#3")]
    Ts3,
}

impl TestSetup {
    pub const ALL: [TestSetup; 3] = [Self::Ts1, Self::Ts2, Self::Ts3];

    pub fn includes(self, segment: Segment) -> bool {
        match self {
            Self::Ts1 => segment == Segment::M,
            Self::Ts2 => matches!(segment, Segment::S | Segment::E),
            Self::Ts3 => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ts1 => "Ts#1",
            Self::Ts2 => "Ts#2",
            Self::Ts3 => "Ts#3",
        }
    }
}

impl fmt::Display for TestSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const METRICS: [&str; 6] = ["auroc", "aupr", "accuracy_f", "f1_f", "accuracy_g", "f1_g"];

/// Metrics of one seed on one test filter. `None` marks a metric that is
/// undefined for the filtered samples.
pub type MetricRow = BTreeMap<String, Option<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEvaluation {
    pub seed: u64,
    pub thresholds: ThresholdChoice,
    pub setups: BTreeMap<TestSetup, MetricRow>,
    pub counts: BTreeMap<TestSetup, (usize, usize)>,
}

/// Thresholds from the validation scores, then every metric on every
/// test filter.
pub fn evaluate_scores(seed: u64, validation: &[ScoredSample], test: &[ScoredSample]) -> Result<SeedEvaluation> {
    let vs: Vec<f64> = validation.iter().map(|s| s.score).collect();
    let vy: Vec<bool> = validation.iter().map(|s| s.anomalous).collect();
    let thresholds = select_thresholds(&vs, &vy)?;
    if thresholds.degenerate {
        log::warn!("seed {seed}: threshold selection is degenerate ({thresholds:?})");
    }
    let mut setups = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for ts in TestSetup::ALL {
        let part: Vec<&ScoredSample> = test.iter().filter(|s| ts.includes(s.segment)).collect();
        let scores: Vec<f64> = part.iter().map(|s| s.score).collect();
        let labels: Vec<bool> = part.iter().map(|s| s.anomalous).collect();
        let (pos, neg) = class_counts(&labels);
        counts.insert(ts, (pos, neg));
        let mut row = MetricRow::new();
        row.insert("auroc".into(), auroc(&scores, &labels).ok());
        row.insert("aupr".into(), aupr(&scores, &labels).ok());
        let both = pos > 0 && neg > 0;
        for (suffix, lambda) in [("f", thresholds.lambda_f), ("g", thresholds.lambda_g)] {
            let c = Confusion::from_predictions(&classify(&scores, lambda), &labels);
            row.insert(format!("accuracy_{suffix}"), (!part.is_empty()).then(|| c.accuracy()));
            row.insert(format!("f1_{suffix}"), both.then(|| c.f1()));
        }
        setups.insert(ts, row);
    }
    Ok(SeedEvaluation { seed, thresholds, setups, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub seeds: Vec<SeedEvaluation>,
    pub summary: BTreeMap<TestSetup, BTreeMap<String, Option<Aggregate>>>,
}

impl DetectorReport {
    pub fn from_seeds(seeds: Vec<SeedEvaluation>) -> Self {
        let mut summary = BTreeMap::new();
        for ts in TestSetup::ALL {
            let mut row = BTreeMap::new();
            for m in METRICS {
                let values: Vec<f64> =
                    seeds.iter().filter_map(|s| s.setups.get(&ts).and_then(|r| r.get(m).copied().flatten())).collect();
                let agg = mean_and_stderr(&values).map(|(mean, stderr)| Aggregate { mean, stderr, n: values.len() });
                row.insert(m.to_owned(), agg);
            }
            summary.insert(ts, row);
        }
        Self { seeds, summary }
    }

    pub fn metric(&self, ts: TestSetup, metric: &str) -> Option<Aggregate> {
        self.summary.get(&ts)?.get(metric).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setup: SetupTag,
    pub label_source: String,
    pub detectors: BTreeMap<String, DetectorReport>,
    pub config_hash: Option<String>,
    pub seeds: Vec<u64>,
}

impl EvalReport {
    /// Aligned plain-text table: one block per detector, one row per test
    /// filter, mean and standard error per metric.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "setup {}  labels {}  seeds {:?}", self.setup, self.label_source, self.seeds);
        let _ = write!(out, "{:<16} {:<5}", "detector", "test");
        for m in METRICS {
            let _ = write!(out, " {m:>17}");
        }
        out.push('\n');
        for (name, rep) in &self.detectors {
            for ts in TestSetup::ALL {
                let _ = write!(out, "{name:<16} {:<5}", ts.name());
                for m in METRICS {
                    let cell = match rep.metric(ts, m) {
                        Some(a) => format!("{:.4} ± {:.4}", a.mean, a.stderr),
                        None => "-".to_owned(),
                    };
                    let _ = write!(out, " {cell:>17}");
                }
                out.push('\n');
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Deployment cleaning

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Distance from each query embedding to its nearest reference embedding.
pub fn nearest_distances(queries: &[Vec<f64>], reference: &[Vec<f64>]) -> Vec<f64> {
    queries
        .iter()
        .map(|q| reference.iter().map(|r| l2(q, r)).fold(f64::INFINITY, f64::min))
        .collect()
}

/// `p`-th percentile of leave-one-out nearest-neighbour distances within the
/// reference set.
pub fn loo_threshold(reference: &[Vec<f64>], p: f64) -> Result<f64> {
    if reference.len() < 2 {
        return Err(Error::config("leave-one-out threshold needs at least two training embeddings"));
    }
    let d: Vec<f64> = (0..reference.len())
        .map(|i| {
            reference
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, r)| l2(&reference[i], r))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(percentile(&d, p).expect("nonempty"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningOutcome {
    pub threshold: f64,
    pub distances: Vec<f64>,
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
}

/// Removes deployment samples whose context embedding lies farther than
/// `threshold` from every training embedding. Without an explicit threshold
/// the 99th leave-one-out percentile of the training set is used.
pub fn clean_deployment(deployment: &[Vec<f64>], training: &[Vec<f64>], threshold: Option<f64>) -> Result<CleaningOutcome> {
    if training.is_empty() {
        return Err(Error::config("deployment cleaning needs training embeddings"));
    }
    let threshold = match threshold {
        Some(t) => t,
        None => loo_threshold(training, 99.0)?,
    };
    let distances = nearest_distances(deployment, training);
    let (kept, removed) = (0..deployment.len()).partition(|&i| distances[i] <= threshold);
    Ok(CleaningOutcome { threshold, distances, kept, removed })
}
