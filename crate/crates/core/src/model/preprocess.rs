use serde::{Deserialize, Serialize};

use crate::data::{DaySequence, ThermalFrame};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Global pixel range of the training set, used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub min: f64,
    pub max: f64,
}

impl PreprocessStats {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        let stats = Self { min, max };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.is_finite() && self.max.is_finite() && self.max > self.min {
            Ok(())
        } else {
            Err(Error::config(format!("degenerate preprocessing range [{}, {}]", self.min, self.max)))
        }
    }

    pub fn from_days<S: Scalar>(days: &[DaySequence<S>]) -> Result<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for s in days.iter().flat_map(|d| &d.samples) {
            min = min.min(s.frame.min().f64());
            max = max.max(s.frame.max().f64());
        }
        Self::new(min, max)
    }
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn bilinear_resize<S: Scalar>(frame: &ThermalFrame<S>, out_h: usize, out_w: usize) -> Vec<f64> {
    let (h, w) = (frame.height(), frame.width());
    let coord = |d: usize, n_in: usize, n_out: usize| {
        let src = ((d as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = src.floor() as usize;
        (lo, (lo + 1).min(n_in - 1), src - lo as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|c| coord(c, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let (r0, r1, fr) = coord(r, h, out_h);
        for &(c0, c1, fc) in &cols {
            let px = |r: usize, c: usize| frame.get(r, c).f64();
            let top = px(r0, c0) * (1.0 - fc) + px(r0, c1) * fc;
            let bottom = px(r1, c0) * (1.0 - fc) + px(r1, c1) * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// Resizes to `size x size`, scales into `[0, 1]` and replicates the thermal
/// channel three times. Output is channel-major.
pub fn preprocess<S: Scalar, T: Scalar>(frame: &ThermalFrame<S>, stats: &PreprocessStats, size: usize) -> Result<Vec<T>> {
    stats.validate()?;
    let span = stats.max - stats.min;
    let plane: Vec<T> = bilinear_resize(frame, size, size)
        .into_iter()
        .map(|v| T::of(((v - stats.min) / span).clamp(0.0, 1.0)))
        .collect();
    let mut out = Vec::with_capacity(3 * plane.len());
    for _ in 0..3 {
        out.extend_from_slice(&plane);
    }
    Ok(out)
}
