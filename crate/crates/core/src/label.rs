//! Rule-based labelling engine.
//!
//! Days are filtered, split into S/M/E segments from their mean-temperature
//! profile, and then labelled: plateau (M) samples by four image rules, ramp
//! (S/E) samples by a trend rule. A sample is anomalous iff any rule that
//! applies to its segment flags it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{DayId, DaySequence, Label, Segment, ThermalFrame};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::{percentile, running_median};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub r1_pair_percentile: f64,
    pub r1_dataset_percentile: f64,
    pub r2_percentile: f64,
    pub r3_template_count: usize,
    pub r4_horizontal_threshold: f64,
    pub r4_vertical_threshold: f64,
    /// Minimum mean-temperature change (degrees) over `trend_window` samples.
    pub trend_threshold: f64,
    pub trend_window: usize,
    pub min_day_samples: usize,
    pub m_plateau_fraction: f64,
    pub smoothing_window: usize,
    /// Days whose M mean falls below this fraction of the median are dropped.
    pub low_temperature_fraction: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            r1_pair_percentile: 95.0,
            r1_dataset_percentile: 99.9,
            r2_percentile: 1.0,
            r3_template_count: 5,
            // Just above the largest responses on clean plateau frames of the default
            // simulator at 32 and 64 pixels.
            r4_horizontal_threshold: 16.0,
            r4_vertical_threshold: 9.5,
            trend_threshold: 5.0,
            trend_window: 3,
            min_day_samples: 20,
            m_plateau_fraction: 0.9,
            smoothing_window: 5,
            low_temperature_fraction: 0.5,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        let pct = |name: &str, v: f64| {
            if v > 0.0 && v < 100.0 {
                Ok(())
            } else {
                Err(Error::config(format!("label.{name} must lie in (0, 100)")))
            }
        };
        pct("r1_pair_percentile", self.r1_pair_percentile)?;
        pct("r1_dataset_percentile", self.r1_dataset_percentile)?;
        pct("r2_percentile", self.r2_percentile)?;
        if self.r3_template_count == 0 || self.trend_window == 0 || self.smoothing_window == 0 {
            return Err(Error::config("label template count, trend and smoothing windows must be >= 1"));
        }
        if !(self.r4_horizontal_threshold > 0.0 && self.r4_vertical_threshold > 0.0 && self.trend_threshold > 0.0) {
            return Err(Error::config("label thresholds must be positive"));
        }
        if !(self.m_plateau_fraction > 0.0 && self.m_plateau_fraction <= 1.0) {
            return Err(Error::config("label.m_plateau_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Day filtering and segmentation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooFewSamples,
    LowMTemperature,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::TooFewSamples => "too_few_samples",
            DropReason::LowMTemperature => "low_M_temperature",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome<S> {
    pub kept: Vec<DaySequence<S>>,
    pub dropped: Vec<(DaySequence<S>, DropReason)>,
}

/// Per-sample segment from the smoothed mean-temperature profile.
///
/// The plateau M is the longest contiguous run whose smoothed mean reaches
/// `m_plateau_fraction` of the peak; S precedes it and E follows it. A day
/// where no run qualifies is all S.
pub fn segment_assignments<S: Scalar>(day: &DaySequence<S>, config: &LabelConfig) -> Vec<Segment> {
    if day.is_empty() {
        return Vec::new();
    }
    let means: Vec<f64> = day.frame_means().iter().map(|m| m.f64()).collect();
    let smooth = running_median(&means, config.smoothing_window);
    let peak = smooth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let level = config.m_plateau_fraction * peak;

    let mut best: Option<(usize, usize)> = None;
    let mut run_start = None;
    for i in 0..=smooth.len() {
        let inside = i < smooth.len() && smooth[i] >= level;
        match (inside, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(bs, be)| i - s > be - bs) {
                    best = Some((s, i));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    match best {
        None => vec![Segment::S; day.len()],
        Some((s, e)) => (0..day.len())
            .map(|i| {
                if i < s {
                    Segment::S
                } else if i < e {
                    Segment::M
                } else {
                    Segment::E
                }
            })
            .collect(),
    }
}

pub fn segment_day<S: Scalar>(mut day: DaySequence<S>, config: &LabelConfig) -> DaySequence<S> {
    let segments = segment_assignments(&day, config);
    for (s, seg) in day.samples.iter_mut().zip(segments) {
        s.segment = seg;
    }
    day
}

fn m_mean<S: Scalar>(day: &DaySequence<S>, config: &LabelConfig) -> Option<f64> {
    let segs: Vec<Segment> = if day.samples.iter().any(|s| s.segment == Segment::M) {
        day.samples.iter().map(|s| s.segment).collect()
    } else {
        segment_assignments(day, config)
    };
    let vals: Vec<f64> = day
        .samples
        .iter()
        .zip(&segs)
        .filter(|(_, &g)| g == Segment::M)
        .map(|(s, _)| s.frame.mean().f64())
        .collect();
    crate::stats::mean(&vals)
}

/// Drops short days and days whose plateau stays cold relative to the rest.
pub fn filter_days<S: Scalar>(days: Vec<DaySequence<S>>, config: &LabelConfig) -> FilterOutcome<S> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut candidates = Vec::new();
    for day in days {
        if day.len() < config.min_day_samples {
            dropped.push((day, DropReason::TooFewSamples));
        } else {
            let m = m_mean(&day, config);
            candidates.push((day, m));
        }
    }
    let means: Vec<f64> = candidates.iter().filter_map(|(_, m)| *m).collect();
    let median = percentile(&means, 50.0);
    for (day, m) in candidates {
        let cold = match (m, median) {
            (Some(m), Some(med)) => m < config.low_temperature_fraction * med,
            (None, _) => true,
            _ => false,
        };
        if cold {
            dropped.push((day, DropReason::LowMTemperature));
        } else {
            kept.push(day);
        }
    }
    FilterOutcome { kept, dropped }
}

// ---------------------------------------------------------------------------
// Image rules

/// `p`-th percentile of the pixel-wise squared differences of two frames.
pub fn squared_diff_percentile<S: Scalar>(a: &ThermalFrame<S>, b: &ThermalFrame<S>, p: f64) -> f64 {
    let diffs: Vec<f64> = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x.f64() - y.f64()).powi(2))
        .collect();
    percentile(&diffs, p).unwrap_or(0.0)
}

/// Scores, dataset threshold and flags of one rule, indexed `[day][sample]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutput {
    pub scores: Vec<Vec<Option<f64>>>,
    pub threshold: Option<f64>,
    pub flags: Vec<Vec<bool>>,
}

impl RuleOutput {
    fn from_scores(scores: Vec<Vec<Option<f64>>>, pct: f64, above: bool) -> Self {
        let all: Vec<f64> = scores.iter().flatten().flatten().copied().collect();
        let threshold = percentile(&all, pct);
        let flags = scores
            .iter()
            .map(|day| {
                day.iter()
                    .map(|s| match (s, threshold) {
                        (Some(v), Some(t)) => {
                            if above {
                                *v > t
                            } else {
                                *v < t
                            }
                        }
                        _ => false,
                    })
                    .collect()
            })
            .collect();
        Self { scores, threshold, flags }
    }

    pub fn flag_count(&self) -> usize {
        self.flags.iter().flatten().filter(|&&f| f).count()
    }
}

fn m_indices<S: Scalar>(day: &DaySequence<S>) -> Vec<usize> {
    (0..day.len()).filter(|&i| day.samples[i].segment == Segment::M).collect()
}

/// Consecutive-frame difference rule over each day's M segment.
pub fn rule_r1<S: Scalar>(days: &[DaySequence<S>], config: &LabelConfig) -> RuleOutput {
    let scores = days
        .iter()
        .map(|day| {
            let mut out = vec![None; day.len()];
            for pair in m_indices(day).windows(2) {
                let (prev, cur) = (&day.samples[pair[0]].frame, &day.samples[pair[1]].frame);
                out[pair[1]] = Some(squared_diff_percentile(cur, prev, config.r1_pair_percentile));
            }
            out
        })
        .collect();
    RuleOutput::from_scores(scores, config.r1_dataset_percentile, true)
}

/// Deviation of each M frame's mean from the day's mean M temperature.
pub fn rule_r2<S: Scalar>(days: &[DaySequence<S>], config: &LabelConfig) -> RuleOutput {
    let scores = days
        .iter()
        .map(|day| {
            let idx = m_indices(day);
            let means: Vec<f64> = idx.iter().map(|&i| day.samples[i].frame.mean().f64()).collect();
            let mut out = vec![None; day.len()];
            if let Some(day_mean) = crate::stats::mean(&means) {
                for (&i, m) in idx.iter().zip(&means) {
                    out[i] = Some(m - day_mean);
                }
            }
            out
        })
        .collect();
    RuleOutput::from_scores(scores, config.r2_percentile, false)
}

/// Mean difference to the day's first M frames, used as templates.
pub fn rule_r3<S: Scalar>(days: &[DaySequence<S>], config: &LabelConfig) -> RuleOutput {
    let scores = days
        .iter()
        .map(|day| {
            let idx = m_indices(day);
            let mut out = vec![None; day.len()];
            if idx.is_empty() {
                return out;
            }
            let n_templates = config.r3_template_count.min(idx.len());
            if n_templates < config.r3_template_count {
                log::warn!(
                    "day {} has {} M samples; using {n_templates} R3 templates",
                    day.day_id,
                    idx.len()
                );
            }
            let templates: Vec<&ThermalFrame<S>> = idx[..n_templates].iter().map(|&i| &day.samples[i].frame).collect();
            for &i in &idx {
                let frame = &day.samples[i].frame;
                let total: f64 = templates
                    .iter()
                    .map(|t| squared_diff_percentile(frame, t, config.r1_pair_percentile))
                    .sum();
                out[i] = Some(total / templates.len() as f64);
            }
            out
        })
        .collect();
    RuleOutput::from_scores(scores, config.r1_dataset_percentile, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R4Score {
    pub horizontal: f64,
    pub vertical: f64,
    pub flag: bool,
}

pub const SOBEL_VERTICAL_EDGE: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];

/// Freezing statistics: largest row-to-row jump and mean vertical-edge
/// response over the column-difference image.
pub fn rule_r4<S: Scalar>(frame: &ThermalFrame<S>, config: &LabelConfig) -> Result<R4Score> {
    let (h, w) = (frame.height(), frame.width());
    if h < 4 || w < 4 {
        return Err(Error::InvalidFrame(format!("R4 needs at least 4x4, got {h}x{w}")));
    }
    let px = |r: usize, c: usize| frame.get(r, c).f64();
    let mut horizontal = 0.0f64;
    for r in 0..h - 1 {
        for c in 0..w {
            horizontal = horizontal.max((px(r + 1, c) - px(r, c)).abs());
        }
    }
    let dw = w - 1;
    let diff: Vec<f64> = (0..h).flat_map(|r| (0..dw).map(move |c| (r, c))).map(|(r, c)| px(r, c + 1) - px(r, c)).collect();
    let (oh, ow) = (h - 2, dw - 2);
    let mut sum = 0.0;
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = 0.0;
            for (kr, row) in SOBEL_VERTICAL_EDGE.iter().enumerate() {
                for (kc, k) in row.iter().enumerate() {
                    acc += k * diff[(r + kr) * dw + c + kc];
                }
            }
            sum += acc.abs();
        }
    }
    let vertical = sum / (oh * ow) as f64;
    let flag = horizontal > config.r4_horizontal_threshold || vertical > config.r4_vertical_threshold;
    Ok(R4Score { horizontal, vertical, flag })
}

/// Trend rule for ramp segments. `Some(true)` marks an anomalous S/E sample,
/// `None` a sample outside S and E.
pub fn label_se_segments<S: Scalar>(day: &DaySequence<S>, config: &LabelConfig) -> Vec<Option<bool>> {
    let means: Vec<f64> = day.frame_means().iter().map(|m| m.f64()).collect();
    let mut out = vec![None; day.len()];
    for seg in [Segment::S, Segment::E] {
        let idx: Vec<usize> = (0..day.len()).filter(|&i| day.samples[i].segment == seg).collect();
        for (j, &i) in idx.iter().enumerate() {
            if j == 0 {
                out[i] = Some(false);
                continue;
            }
            let reference = idx[j.saturating_sub(config.trend_window)];
            let change = means[i] - means[reference];
            let normal = match seg {
                Segment::S => change > config.trend_threshold,
                _ => change < -config.trend_threshold,
            };
            out[i] = Some(!normal);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Combination

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleVerdict {
    pub segment: Segment,
    pub r1: Option<f64>,
    pub r1_flag: bool,
    pub r2: Option<f64>,
    pub r2_flag: bool,
    pub r3: Option<f64>,
    pub r3_flag: bool,
    pub r4: Option<R4Score>,
    pub trend_flag: Option<bool>,
    pub label: Label,
}

/// Logical OR of the rules that apply to each sample's segment.
pub fn combine_labels(verdicts: &mut [RuleVerdict]) {
    for v in verdicts {
        let anomalous = match v.segment {
            Segment::M => v.r1_flag || v.r2_flag || v.r3_flag || v.r4.is_some_and(|r| r.flag),
            Segment::S | Segment::E => v.trend_flag.unwrap_or(false),
            Segment::Unassigned => false,
        };
        v.label = Label::from_flag(anomalous);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub days_kept: usize,
    pub days_dropped: BTreeMap<String, String>,
    pub samples: usize,
    pub flag_counts: BTreeMap<String, usize>,
    pub thresholds: BTreeMap<String, f64>,
    pub anomalous: usize,
    /// Agreement of rule segments with pre-existing segment assignments.
    pub segment_agreement: Option<f64>,
    /// Agreement of rule labels with pre-existing ground truth.
    pub label_agreement: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LabelOutcome<S> {
    /// Kept days with rule labels written into `y`; segments left untouched
    /// where already assigned.
    pub days: Vec<DaySequence<S>>,
    pub dropped: Vec<(DayId, DropReason)>,
    pub verdicts: Vec<Vec<RuleVerdict>>,
    pub report: RuleReport,
}

/// Runs the full labelling pipeline over a dataset.
pub fn label_dataset<S: Scalar>(days: Vec<DaySequence<S>>, config: &LabelConfig) -> Result<LabelOutcome<S>> {
    config.validate()?;
    let filtered = filter_days(days, config);
    let originals = filtered.kept;
    let segmented: Vec<DaySequence<S>> = originals.iter().cloned().map(|d| segment_day(d, config)).collect();

    let r1 = rule_r1(&segmented, config);
    let r2 = rule_r2(&segmented, config);
    let r3 = rule_r3(&segmented, config);

    let mut verdicts = Vec::with_capacity(segmented.len());
    for (d, day) in segmented.iter().enumerate() {
        let trend = label_se_segments(day, config);
        let mut vs = Vec::with_capacity(day.len());
        for (i, s) in day.samples.iter().enumerate() {
            let r4 = if s.segment == Segment::M { Some(rule_r4(&s.frame, config)?) } else { None };
            vs.push(RuleVerdict {
                segment: s.segment,
                r1: r1.scores[d][i],
                r1_flag: r1.flags[d][i],
                r2: r2.scores[d][i],
                r2_flag: r2.flags[d][i],
                r3: r3.scores[d][i],
                r3_flag: r3.flags[d][i],
                r4,
                trend_flag: trend[i],
                label: Label::Unlabeled,
            });
        }
        combine_labels(&mut vs);
        verdicts.push(vs);
    }

    let mut report = RuleReport {
        days_kept: originals.len(),
        days_dropped: filtered
            .dropped
            .iter()
            .map(|(d, r)| (d.day_id.0.clone(), r.as_str().to_owned()))
            .collect(),
        ..Default::default()
    };
    let mut seg_total = 0usize;
    let mut seg_agree = 0usize;
    let mut truth_total = 0usize;
    let mut truth_agree = 0usize;
    let mut out_days = Vec::with_capacity(originals.len());
    for (mut day, vs) in originals.into_iter().zip(&verdicts) {
        for (s, v) in day.samples.iter_mut().zip(vs) {
            if s.segment == Segment::Unassigned {
                s.segment = v.segment;
            } else {
                seg_total += 1;
                seg_agree += (s.segment == v.segment) as usize;
            }
            if s.y != Label::Unlabeled {
                truth_total += 1;
                truth_agree += (s.y == v.label) as usize;
            }
            s.y = v.label;
        }
        out_days.push(day);
    }
    let flat: Vec<&RuleVerdict> = verdicts.iter().flatten().collect();
    report.samples = flat.len();
    report.anomalous = flat.iter().filter(|v| v.label.is_anomalous()).count();
    let count = |f: &dyn Fn(&RuleVerdict) -> bool| flat.iter().filter(|v| f(v)).count();
    report.flag_counts.insert("r1".into(), r1.flag_count());
    report.flag_counts.insert("r2".into(), r2.flag_count());
    report.flag_counts.insert("r3".into(), r3.flag_count());
    report.flag_counts.insert("r4".into(), count(&|v| v.r4.is_some_and(|r| r.flag)));
    report.flag_counts.insert("trend".into(), count(&|v| v.trend_flag == Some(true)));
    for (name, t) in [("r1", r1.threshold), ("r2", r2.threshold), ("r3", r3.threshold)] {
        if let Some(t) = t {
            report.thresholds.insert(name.into(), t);
        }
    }
    report.thresholds.insert("r4_horizontal".into(), config.r4_horizontal_threshold);
    report.thresholds.insert("r4_vertical".into(), config.r4_vertical_threshold);
    report.thresholds.insert("trend".into(), config.trend_threshold);
    report.segment_agreement = (seg_total > 0).then(|| seg_agree as f64 / seg_total as f64);
    report.label_agreement = (truth_total > 0).then(|| truth_agree as f64 / truth_total as f64);

    Ok(LabelOutcome {
        days: out_days,
        dropped: filtered.dropped.into_iter().map(|(d, r)| (d.day_id, r)).collect(),
        verdicts,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;

    fn frame(h: usize, w: usize, px: Vec<f64>) -> ThermalFrame<f64> {
        ThermalFrame::new(h, w, px).unwrap()
    }

    fn day_of(id: &str, frames: Vec<ThermalFrame<f64>>, seg: Segment) -> DaySequence<f64> {
        let samples = frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| Sample {
                frame: f,
                t: i as f64 * 60.0,
                y: Label::Normal,
                segment: seg,
                day_id: id.into(),
                anomaly_kind: None,
            })
            .collect();
        DaySequence::new(id.into(), samples).unwrap()
    }

    fn flat_day(id: &str, n: usize, temp: f64) -> DaySequence<f64> {
        day_of(id, (0..n).map(|_| ThermalFrame::filled(4, 4, temp).unwrap()).collect(), Segment::M)
    }

    #[test]
    fn r1_fixture() {
        let a = frame(2, 2, vec![0.0; 4]);
        let b = frame(2, 2, vec![0.0, 0.0, 0.0, 10.0]);
        assert_eq!(squared_diff_percentile(&b, &a, 95.0), 85.0);
        assert_eq!(squared_diff_percentile(&a, &a, 95.0), 0.0);
    }

    #[test]
    fn r1_flags_only_differing_pair() {
        let mut frames: Vec<_> = (0..6).map(|_| ThermalFrame::filled(2, 2, 5.0).unwrap()).collect();
        for f in &mut frames[3..] {
            *f = frame(2, 2, vec![5.0, 5.0, 5.0, 15.0]);
        }
        let d = day_of("d", frames, Segment::M);
        let out = rule_r1(&[d], &LabelConfig::default());
        assert_eq!(out.scores[0][0], None);
        assert_eq!(out.flags[0], vec![false, false, false, true, false, false]);
    }

    #[test]
    fn r2_scores_and_flags() {
        let mut d = flat_day("a", 10, 300.0);
        d.samples[4].frame = ThermalFrame::filled(4, 4, 200.0).unwrap();
        let days = vec![d, flat_day("b", 10, 310.0)];
        let out = rule_r2(&days, &LabelConfig::default());
        let (i, min) = out.scores[0]
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.unwrap()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(i, 4);
        assert!((min - (-90.0)).abs() < 1e-9);
        assert!(out.flags[0][4]);
        assert_eq!(out.flag_count(), 1);
        assert!(rule_r2(&[flat_day("c", 5, 7.0)], &LabelConfig::default())
            .scores[0]
            .iter()
            .all(|s| *s == Some(0.0)));
    }

    #[test]
    fn r2_matches_brute_force_on_three_days() {
        let mk = |id: &str, vals: &[f64]| {
            day_of(id, vals.iter().map(|&v| ThermalFrame::filled(2, 2, v).unwrap()).collect(), Segment::M)
        };
        let days = vec![mk("a", &[10.0, 12.0, 3.0]), mk("b", &[7.0, 7.5]), mk("c", &[1.0, 9.0, 9.0, 9.0])];
        let out = rule_r2(&days, &LabelConfig::default());
        // Brute force: deviations from each day's mean, then the 1st percentile.
        let dev = [
            vec![10.0 - 25.0 / 3.0, 12.0 - 25.0 / 3.0, 3.0 - 25.0 / 3.0],
            vec![-0.25, 0.25],
            vec![1.0 - 7.0, 2.0, 2.0, 2.0],
        ];
        let mut all: Vec<f64> = dev.iter().flatten().copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = 0.01 * (all.len() - 1) as f64;
        let thr = all[0] + (all[1] - all[0]) * pos;
        for (d, row) in dev.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                assert!((out.scores[d][i].unwrap() - v).abs() < 1e-12);
                assert_eq!(out.flags[d][i], *v < thr);
            }
        }
        assert!((out.threshold.unwrap() - thr).abs() < 1e-12);
    }

    #[test]
    fn r3_two_template_fixture() {
        let t1 = frame(2, 2, vec![0.0; 4]);
        let t2 = frame(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        let x = frame(2, 2, vec![0.0, 0.0, 0.0, 10.0]);
        let d = day_of("d", vec![t1, t2, x], Segment::M);
        let cfg = LabelConfig { r3_template_count: 2, ..Default::default() };
        let out = rule_r3(&[d], &cfg);
        // against t1: [0,0,0,100] -> 85; against t2: [1,1,1,81] -> 1 + 0.85*80 = 69
        assert_eq!(out.scores[0][2], Some((85.0 + 69.0) / 2.0));
        // template t1 against {t1, t2}: (0 + 1) / 2
        assert_eq!(out.scores[0][0], Some(0.5));
    }

    #[test]
    fn r3_templates_score_zero_on_constant_day() {
        let out = rule_r3(&[flat_day("a", 8, 100.0)], &LabelConfig::default());
        assert!(out.scores[0].iter().all(|s| *s == Some(0.0)));
        let few = rule_r3(&[flat_day("b", 3, 100.0)], &LabelConfig::default());
        assert_eq!(few.scores[0].len(), 3);
    }

    #[test]
    fn r4_constant_and_streak() {
        let cfg = LabelConfig::default();
        let c = ThermalFrame::filled(6, 6, 300.0f64).unwrap();
        let r = rule_r4(&c, &cfg).unwrap();
        assert_eq!((r.horizontal, r.vertical, r.flag), (0.0, 0.0, false));
        let mut px = vec![300.0; 36];
        for r in 0..6 {
            px[r * 6 + 2] += 100.0;
        }
        let r = rule_r4(&frame(6, 6, px), &cfg).unwrap();
        assert_eq!(r.horizontal, 0.0);
        assert!(r.vertical > 0.0);
        assert!(r.flag);
        assert!(rule_r4(&ThermalFrame::filled(3, 8, 1.0f64).unwrap(), &cfg).is_err());
    }

    #[test]
    fn r4_five_by_five_fixture() {
        #[rustfmt::skip]
        let px = vec![
            1.0, 2.0, 4.0, 7.0, 11.0,
            0.0, 0.0, 5.0, 0.0, 0.0,
            3.0, 1.0, 4.0, 1.0, 5.0,
            9.0, 2.0, 6.0, 5.0, 3.0,
            5.0, 8.0, 9.0, 7.0, 9.0,
        ];
        let f = frame(5, 5, px.clone());
        let r = rule_r4(&f, &LabelConfig::default()).unwrap();
        // horizontal: largest |row diff| is |9 - 3| = 6 at column 0 (rows 2->3)
        // and |0 - 11| = 11 at column 4 (rows 0->1).
        assert_eq!(r.horizontal, 11.0);
        // Column differences D (5x4):
        // [ 1,  2,  3,  4]
        // [ 0,  5, -5,  0]
        // [-2,  3, -3,  4]
        // [-7,  4, -1, -2]
        // [ 3,  1, -2,  2]
        // Valid 3x2 Sobel responses, rows 0..3, cols 0..2:
        // (0,0): -1*1+1*3 -2*0+2*(-5) -1*(-2)+1*(-3) = 2 - 10 - 1 = -9
        // (0,1): -2+4 -2*5+0 -3+4 = 2 - 10 + 1 = -7
        // (1,0): 0-5 -2*(-2)+2*(-3) -(-7)+(-1) = -5 - 2 + 6 = -1
        // (1,1): -5+0 -6+8 -4-2 = -5 + 2 - 6 = -9
        // (2,0): -(-2)+(-3) -2*(-7)+2*(-1) -3+(-2) = -1 + 12 - 5 = 6
        // (2,1): -3+4 -8-4 -1+2 = 1 - 12 + 1 = -10
        let expected = (9.0 + 7.0 + 1.0 + 9.0 + 6.0 + 10.0) / 6.0;
        assert!((r.vertical - expected).abs() < 1e-12, "{}", r.vertical);
    }

    #[test]
    fn r4_mirror_symmetry() {
        let px: Vec<f64> = (0..42).map(|i| ((i * 37) % 11) as f64).collect();
        let f = frame(6, 7, px.clone());
        let mut mirrored = Vec::new();
        for r in 0..6 {
            for c in (0..7).rev() {
                mirrored.push(px[r * 7 + c]);
            }
        }
        let a = rule_r4(&f, &LabelConfig::default()).unwrap();
        let b = rule_r4(&frame(6, 7, mirrored), &LabelConfig::default()).unwrap();
        assert!((a.vertical - b.vertical).abs() < 1e-12);
    }

    #[test]
    fn trend_rule() {
        let cfg = LabelConfig::default();
        let ramp = day_of(
            "r",
            (0..10).map(|i| ThermalFrame::filled(2, 2, 50.0 + 2.0 * i as f64).unwrap()).collect(),
            Segment::S,
        );
        // 2 degrees per sample: 6 over three samples passes, 2 or 4 over a
        // clipped window does not.
        let flags = label_se_segments(&ramp, &cfg);
        assert_eq!(flags[0], Some(false));
        assert_eq!(flags[1], Some(true));
        assert_eq!(flags[2], Some(true));
        assert!(flags[3..].iter().all(|f| *f == Some(false)));

        let flat = flat_day("f", 6, 100.0);
        let flat = DaySequence { samples: flat.samples.into_iter().map(|mut s| { s.segment = Segment::S; s }).collect(), ..flat };
        assert!(label_se_segments(&flat, &cfg)[1..].iter().all(|f| *f == Some(true)));

        let mut dropped = day_of(
            "g",
            (0..8).map(|i| ThermalFrame::filled(2, 2, 50.0 + 10.0 * i as f64).unwrap()).collect(),
            Segment::S,
        );
        dropped.samples[5].frame = ThermalFrame::filled(2, 2, 60.0).unwrap();
        assert_eq!(label_se_segments(&dropped, &cfg)[5], Some(true));
    }

    #[test]
    fn segmentation_shapes() {
        let cfg = LabelConfig::default();
        let constant = flat_day("c", 30, 200.0);
        assert!(segment_assignments(&constant, &cfg).iter().all(|s| *s == Segment::M));
        let rising = day_of(
            "r",
            (0..30).map(|i| ThermalFrame::filled(2, 2, 10.0 * (i + 1) as f64).unwrap()).collect(),
            Segment::Unassigned,
        );
        let segs = segment_assignments(&rising, &cfg);
        let first_m = segs.iter().position(|s| *s == Segment::M).unwrap();
        assert!(segs[..first_m].iter().all(|s| *s == Segment::S));
        assert!(segs[first_m..].iter().all(|s| *s == Segment::M));
        // 0.9 * (running median peak 290) = 261 -> means 270, 280, (290, 300 smoothed 290)
        assert_eq!(first_m, 26);
    }

    #[test]
    fn filter_rules() {
        let cfg = LabelConfig::default();
        let out = filter_days(vec![flat_day("short", 5, 300.0)], &cfg);
        assert_eq!(out.dropped[0].1, DropReason::TooFewSamples);
        let healthy: Vec<_> = (0..10).map(|i| flat_day(&format!("h{i}"), 25, 300.0)).collect();
        let out = filter_days(healthy.clone(), &cfg);
        assert!(out.dropped.is_empty());
        let mut days = healthy;
        days.push(flat_day("cold", 25, 140.0));
        let out = filter_days(days, &cfg);
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(out.dropped[0].0.day_id.0, "cold");
        assert_eq!(out.dropped[0].1, DropReason::LowMTemperature);
    }

    #[test]
    fn combination_is_or() {
        let base = RuleVerdict {
            segment: Segment::M,
            r1: None,
            r1_flag: false,
            r2: None,
            r2_flag: false,
            r3: None,
            r3_flag: false,
            r4: Some(R4Score { horizontal: 0.0, vertical: 0.0, flag: false }),
            trend_flag: None,
            label: Label::Unlabeled,
        };
        let mut vs = vec![base, RuleVerdict { r4: Some(R4Score { horizontal: 99.0, vertical: 0.0, flag: true }), ..base }];
        combine_labels(&mut vs);
        assert_eq!(vs[0].label, Label::Normal);
        assert_eq!(vs[1].label, Label::Anomalous);
        let mut se = vec![RuleVerdict { segment: Segment::E, trend_flag: Some(true), r1_flag: false, ..base }];
        combine_labels(&mut se);
        assert_eq!(se[0].label, Label::Anomalous);
    }
}
