//! Deterministic generator of synthetic operational days.
//!
//! Each day ramps up from `base_temp` to `peak_temp` (segment S), holds a
//! plateau with a linear temperature gradient along the width axis (M) and
//! ramps back down (E). Frames arrive at uniformly random whole-second
//! intervals. Anomalies are injected per sample and recorded as ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::format::write_day;
use crate::data::{AnomalyKind, DayId, DaySequence, Label, Manifest, Sample, Segment, ThermalFrame};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative frequency of each anomaly kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KindWeights {
    pub freeze_streak: f64,
    pub cold_patch: f64,
    pub global_drop: f64,
    pub hot_spot: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        Self { freeze_streak: 0.2, cold_patch: 0.2, global_drop: 0.4, hot_spot: 0.2 }
    }
}

impl KindWeights {
    fn pairs(&self) -> [(AnomalyKind, f64); 4] {
        [
            (AnomalyKind::FreezeStreak, self.freeze_streak),
            (AnomalyKind::ColdPatch, self.cold_patch),
            (AnomalyKind::GlobalDrop, self.global_drop),
            (AnomalyKind::HotSpot, self.hot_spot),
        ]
    }

    fn pick(&self, u: f64) -> AnomalyKind {
        let pairs = self.pairs();
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut acc = 0.0;
        for (kind, w) in pairs {
            acc += w / total;
            if u < acc {
                return kind;
            }
        }
        pairs.iter().rev().find(|p| p.1 > 0.0).map_or(AnomalyKind::GlobalDrop, |p| p.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub height: usize,
    pub width: usize,
    /// Operational duration in seconds.
    pub day_length: f64,
    pub interarrival_min: f64,
    pub interarrival_max: f64,
    pub base_temp: f64,
    pub peak_temp: f64,
    /// Fraction of the day spent in each ramp.
    pub ramp_fraction: f64,
    /// Temperature span across the width axis during the plateau.
    pub gradient_span: f64,
    pub pixel_noise_sd: f64,
    pub anomaly_rate: f64,
    pub kind_weights: KindWeights,
    /// Magnitude of streak, patch and spot anomalies in degrees.
    pub anomaly_delta: f64,
    /// Probability that a day is generated without any anomaly.
    pub clean_day_fraction: f64,
    /// Probability that an anomaly repeats on the next sample. `0` disables
    /// temporal clustering.
    pub cluster_persistence: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            day_length: 10.0 * 3600.0,
            interarrival_min: 60.0,
            interarrival_max: 300.0,
            base_temp: 40.0,
            peak_temp: 400.0,
            ramp_fraction: 0.15,
            gradient_span: 60.0,
            pixel_noise_sd: 2.0,
            anomaly_rate: 0.08,
            kind_weights: KindWeights::default(),
            anomaly_delta: 80.0,
            clean_day_fraction: 0.0,
            cluster_persistence: 0.0,
            seed: 0,
        }
    }
}

const DAY_SECONDS: f64 = 86_400.0;
const DAY_START_OFFSET: f64 = 8.0 * 3600.0;

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("sim.{name} must lie in [0, 1], got {v}")))
            }
        };
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("sim frame dimensions must be positive"));
        }
        if !(self.interarrival_min > 0.0 && self.interarrival_min <= self.interarrival_max) {
            return Err(Error::config("sim requires 0 < interarrival_min <= interarrival_max"));
        }
        if !(self.ramp_fraction > 0.0 && self.ramp_fraction < 0.5) {
            return Err(Error::config("sim.ramp_fraction must lie in (0, 0.5)"));
        }
        if !(self.peak_temp > self.base_temp && self.base_temp >= 0.0) {
            return Err(Error::config("sim requires peak_temp > base_temp >= 0"));
        }
        if !(self.day_length > 0.0) {
            return Err(Error::config("sim.day_length must be positive"));
        }
        if self.pixel_noise_sd < 0.0 || self.anomaly_delta < 0.0 || self.gradient_span < 0.0 {
            return Err(Error::config("sim noise, gradient and anomaly magnitudes must be >= 0"));
        }
        rate("anomaly_rate", self.anomaly_rate)?;
        rate("clean_day_fraction", self.clean_day_fraction)?;
        rate("cluster_persistence", self.cluster_persistence)?;
        let w = self.kind_weights.pairs();
        if w.iter().any(|p| p.1 < 0.0) || w.iter().map(|p| p.1).sum::<f64>() <= 0.0 {
            return Err(Error::config("sim.kind_weights must be nonnegative with a positive sum"));
        }
        Ok(())
    }

    /// Clean mean temperature and ground-truth segment at `elapsed` seconds.
    pub fn schedule(&self, elapsed: f64) -> (f64, Segment) {
        let p = (elapsed / self.day_length).clamp(0.0, 1.0);
        let span = self.peak_temp - self.base_temp;
        if p < self.ramp_fraction {
            (self.base_temp + span * p / self.ramp_fraction, Segment::S)
        } else if p > 1.0 - self.ramp_fraction {
            (self.base_temp + span * (1.0 - p) / self.ramp_fraction, Segment::E)
        } else {
            (self.peak_temp, Segment::M)
        }
    }

    /// Noise-free frame for a given schedule position.
    pub fn template<S: Scalar>(&self, mean: f64, segment: Segment) -> ThermalFrame<S> {
        let (h, w) = (self.height, self.width);
        let mut pixels = Vec::with_capacity(h * w);
        for _ in 0..h {
            for c in 0..w {
                pixels.push(S::of(self.gradient_offset(segment, c) + mean).max(S::zero()));
            }
        }
        ThermalFrame::from_raw(h, w, pixels)
    }

    fn gradient_offset(&self, segment: Segment, col: usize) -> f64 {
        if segment != Segment::M || self.width < 2 {
            return 0.0;
        }
        self.gradient_span * (col as f64 / (self.width - 1) as f64 - 0.5)
    }

    fn day_rng(&self, day_index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ splitmix64(day_index))
    }
}

pub fn day_id(day_index: u64) -> DayId {
    DayId(format!("day_{day_index:04}"))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Parameters the injection transforms need beyond the frame itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionParams {
    pub delta: f64,
    pub base_temp: f64,
}

impl From<&SimConfig> for InjectionParams {
    fn from(c: &SimConfig) -> Self {
        Self { delta: c.anomaly_delta, base_temp: c.base_temp }
    }
}

/// Applies one anomaly transform; output is clamped at zero.
pub fn inject_anomaly<S: Scalar, R: Rng + ?Sized>(
    frame: &ThermalFrame<S>,
    kind: AnomalyKind,
    params: &InjectionParams,
    rng: &mut R,
) -> ThermalFrame<S> {
    let (h, w) = (frame.height(), frame.width());
    let delta = S::of(params.delta);
    let mut px = frame.pixels().to_vec();
    match kind {
        AnomalyKind::FreezeStreak => {
            let mut hot = vec![false; w];
            for _ in 0..rng.random_range(1..=3) {
                let width = rng.random_range(2..=5usize).min(w);
                let start = rng.random_range(0..=w - width);
                hot[start..start + width].iter_mut().for_each(|c| *c = true);
            }
            for row in px.chunks_exact_mut(w) {
                for (p, &h) in row.iter_mut().zip(&hot) {
                    if h {
                        *p += delta;
                    }
                }
            }
        }
        AnomalyKind::ColdPatch => {
            let area = rng.random_range(0.05..=0.15) * (h * w) as f64;
            let aspect = rng.random_range(0.5..=2.0);
            let ph = ((area * aspect).sqrt().round() as usize).clamp(1, h);
            let pw = ((area / ph as f64).round() as usize).clamp(1, w);
            let r0 = rng.random_range(0..=h - ph);
            let c0 = rng.random_range(0..=w - pw);
            for r in r0..r0 + ph {
                for c in c0..c0 + pw {
                    px[r * w + c] -= delta;
                }
            }
        }
        AnomalyKind::GlobalDrop => {
            let factor = rng.random_range(0.5..=0.8);
            return apply_global_drop(frame, params.base_temp, factor);
        }
        AnomalyKind::HotSpot => {
            let scale = (h.min(w) as f64 / 64.0).max(0.5);
            let radius = rng.random_range(2.0..=4.0) * scale;
            let cr = rng.random_range(0.0..h as f64);
            let cc = rng.random_range(0.0..w as f64);
            for r in 0..h {
                for c in 0..w {
                    let d2 = (r as f64 + 0.5 - cr).powi(2) + (c as f64 + 0.5 - cc).powi(2);
                    if d2 <= radius * radius {
                        px[r * w + c] += delta;
                    }
                }
            }
        }
    }
    px.iter_mut().for_each(|p| *p = p.max(S::zero()));
    ThermalFrame::from_raw(h, w, px)
}

/// Uniform cooling by `factor * (mean - base_temp)`.
pub fn apply_global_drop<S: Scalar>(frame: &ThermalFrame<S>, base_temp: f64, factor: f64) -> ThermalFrame<S> {
    let shift = S::of(factor * (frame.mean().f64() - base_temp).max(0.0));
    frame.map(|p| (p - shift).max(S::zero()))
}

pub fn simulate_day<S: Scalar>(config: &SimConfig, day_index: u64) -> Result<DaySequence<S>> {
    config.validate()?;
    let mut rng = config.day_rng(day_index);
    let id = day_id(day_index);
    let start = day_index as f64 * DAY_SECONDS + DAY_START_OFFSET;
    let noise = Normal::new(0.0, config.pixel_noise_sd.max(0.0)).expect("finite sd");
    let params = InjectionParams::from(config);
    let clean_day = rng.random::<f64>() < config.clean_day_fraction;

    let mut samples = Vec::new();
    let mut elapsed = 0.0;
    let mut previous: Option<AnomalyKind> = None;
    while elapsed <= config.day_length {
        let (mean, segment) = config.schedule(elapsed);
        let mut pixels = Vec::with_capacity(config.height * config.width);
        for _ in 0..config.height {
            for c in 0..config.width {
                let v = mean + config.gradient_offset(segment, c) + noise.sample(&mut rng);
                pixels.push(S::of(v.max(0.0)));
            }
        }
        let mut frame = ThermalFrame::from_raw(config.height, config.width, pixels);

        let u: f64 = rng.random();
        let kind = if clean_day {
            None
        } else {
            match previous {
                Some(k) if u < config.cluster_persistence => Some(k),
                _ if u < config.anomaly_rate => Some(config.kind_weights.pick(rng.random())),
                _ => None,
            }
        };
        if let Some(k) = kind {
            frame = inject_anomaly(&frame, k, &params, &mut rng);
        }
        previous = kind;
        samples.push(Sample {
            frame,
            t: start + elapsed,
            y: Label::from_flag(kind.is_some()),
            segment,
            day_id: id.clone(),
            anomaly_kind: kind,
        });
        let gap = rng.random_range(config.interarrival_min..=config.interarrival_max).round();
        elapsed += gap.max(1.0);
    }
    DaySequence::new(id, samples)
}

/// Days `0..n_days` plus a manifest listing them (no split yet).
pub fn simulate_dataset<S: Scalar>(config: &SimConfig, n_days: usize) -> Result<(Vec<DaySequence<S>>, Manifest)> {
    if n_days == 0 {
        return Err(Error::config("simulate_dataset needs at least one day"));
    }
    let days = (0..n_days as u64).map(|i| simulate_day(config, i)).collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        days: days.iter().map(|d| d.day_id.clone()).collect(),
        height: config.height,
        width: config.width,
        simulated: true,
        seed: Some(config.seed),
        ..Default::default()
    };
    Ok((days, manifest))
}

/// Writes day files and the manifest into `dir`.
pub fn write_dataset<S: Scalar>(dir: &Path, days: &[DaySequence<S>], manifest: &Manifest) -> Result<()> {
    for day in days {
        write_day(dir, day, manifest.height, manifest.width)?;
    }
    manifest.save(dir)
}
