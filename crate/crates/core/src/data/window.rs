use serde::{Deserialize, Serialize};

use super::day::{DayId, DaySequence};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Context length and the first-sample time offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoreConfig {
    pub k: usize,
    pub epsilon: f64,
}

impl Default for CoreConfig {
    fn default() -> Self {
        Self { k: 30, epsilon: 1e-5 }
    }
}

impl CoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("core.k must be at least 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("core.epsilon must be positive"));
        }
        Ok(())
    }
}

/// Inter-arrival time and elapsed operation time of one sample, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeOffsets {
    pub tau: f64,
    pub delta: f64,
}

/// Per-sample `(tau, delta)`.
///
/// The first sample of the sequence gets `tau = epsilon`; any sample sitting
/// at the day's start `t0` gets `delta = epsilon`.
pub fn compute_time_offsets<S: Scalar>(day: &DaySequence<S>, epsilon: f64) -> Result<Vec<TimeOffsets>> {
    day.validate()?;
    let mut out = Vec::with_capacity(day.len());
    let mut prev: Option<f64> = None;
    for s in &day.samples {
        let tau = match prev {
            Some(p) => s.t - p,
            None => epsilon,
        };
        let elapsed = s.t - day.t0;
        let delta = if elapsed > 0.0 { elapsed } else { epsilon };
        out.push(TimeOffsets { tau, delta });
        prev = Some(s.t);
    }
    Ok(out)
}

/// One position of a context window, pointing into the day's samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    /// Index into `DaySequence::samples`.
    pub index: usize,
    pub offsets: TimeOffsets,
    /// True when this entry duplicates the day's first sample to fill the window.
    pub padding: bool,
}

/// The `k` entries preceding a target sample, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub day_id: DayId,
    pub context: Vec<WindowEntry>,
    pub target: WindowEntry,
}

impl ContextWindow {
    pub fn k(&self) -> usize {
        self.context.len()
    }
}

/// One window per sample of the day; never crosses the day boundary.
pub fn build_context_windows<S: Scalar>(
    day: &DaySequence<S>,
    k: usize,
    epsilon: f64,
) -> Result<Vec<ContextWindow>> {
    if k == 0 {
        return Err(Error::config("context length k must be at least 1"));
    }
    let offsets = compute_time_offsets(day, epsilon)?;
    let first = WindowEntry {
        index: 0,
        offsets: TimeOffsets { tau: epsilon, delta: epsilon },
        padding: true,
    };
    let windows = (0..day.len())
        .map(|i| {
            let start = i.saturating_sub(k);
            let mut context = Vec::with_capacity(k);
            context.resize(k - (i - start), first);
            context.extend(
                (start..i).map(|j| WindowEntry { index: j, offsets: offsets[j], padding: false }),
            );
            ContextWindow {
                day_id: day.day_id.clone(),
                context,
                target: WindowEntry { index: i, offsets: offsets[i], padding: false },
            }
        })
        .collect();
    Ok(windows)
}
