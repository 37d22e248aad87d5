//! Comparison detectors: per-frame statistics and the plain autoencoder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DaySequence, Sample};
use crate::error::{Error, Result};
use crate::model::{squared_error, ForecastAd, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureBaseline {
    TimeOfDay,
    NegativeMean,
    NegativeMax,
    NegativeStd,
}

impl FeatureBaseline {
    pub const ALL: [FeatureBaseline; 4] =
        [Self::TimeOfDay, Self::NegativeMean, Self::NegativeMax, Self::NegativeStd];

    pub fn name(self) -> &'static str {
        match self {
            Self::TimeOfDay => "time_of_day",
            Self::NegativeMean => "negative_mean",
            Self::NegativeMax => "negative_max",
            Self::NegativeStd => "negative_std",
        }
    }
}

impl fmt::Display for FeatureBaseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureBaseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown feature baseline {s:?}")))
    }
}

/// Score of one sample; `t0` is the start of the sample's day.
pub fn feature_score<S: Scalar>(sample: &Sample<S>, t0: f64, kind: FeatureBaseline) -> f64 {
    let f = &sample.frame;
    match kind {
        FeatureBaseline::TimeOfDay => sample.t - t0,
        FeatureBaseline::NegativeMean => -f.mean().f64(),
        FeatureBaseline::NegativeMax => -f.max().f64(),
        FeatureBaseline::NegativeStd => -f.std().f64(),
    }
}

pub fn feature_scores<S: Scalar>(day: &DaySequence<S>, kind: FeatureBaseline) -> Vec<f64> {
    day.samples.iter().map(|s| feature_score(s, day.t0, kind)).collect()
}

/// Reconstruction error of one sample under a pre-trained autoencoder.
pub fn autoencoder_score<S: Scalar, T: Scalar>(sample: &Sample<T>, pretrained: &ForecastAd<S>) -> Result<f64> {
    let x = pretrained.prepare_input(&sample.frame)?;
    let size = pretrained.spec().input_size;
    let t = Tensor::from_vec([1, 3, size, size], x);
    let x_hat = pretrained.reconstruct(&t, false);
    Ok(squared_error(&t.data, &x_hat.data))
}

pub fn autoencoder_scores<S: Scalar, T: Scalar>(day: &DaySequence<T>, pretrained: &ForecastAd<S>) -> Result<Vec<f64>> {
    pretrained.reconstruction_errors(day)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, Segment, ThermalFrame};

    fn sample(px: Vec<f64>, h: usize, w: usize, t: f64) -> Sample<f64> {
        Sample {
            frame: ThermalFrame::new(h, w, px).unwrap(),
            t,
            y: Label::Normal,
            segment: Segment::M,
            day_id: "d".into(),
            anomaly_kind: None,
        }
    }

    #[test]
    fn constant_frame() {
        let s = sample(vec![7.0; 4], 2, 2, 10.0);
        assert_eq!(feature_score(&s, 10.0, FeatureBaseline::NegativeMean), -7.0);
        assert_eq!(feature_score(&s, 10.0, FeatureBaseline::NegativeMax), -7.0);
        assert_eq!(feature_score(&s, 10.0, FeatureBaseline::NegativeStd), 0.0);
        assert_eq!(feature_score(&s, 10.0, FeatureBaseline::TimeOfDay), 0.0);
    }

    #[test]
    fn population_std() {
        let s = sample(vec![1.0, 2.0, 3.0, 4.0], 2, 2, 0.0);
        assert!((feature_score(&s, 0.0, FeatureBaseline::NegativeStd) + 1.25f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn shift_covariance() {
        let a = sample(vec![1.0, 5.0, 2.0, 8.0], 2, 2, 0.0);
        let b = sample(vec![4.0, 8.0, 5.0, 11.0], 2, 2, 0.0);
        let d = feature_score(&b, 0.0, FeatureBaseline::NegativeMean) - feature_score(&a, 0.0, FeatureBaseline::NegativeMean);
        assert!((d + 3.0).abs() < 1e-12);
        let sa = feature_score(&a, 0.0, FeatureBaseline::NegativeStd);
        let sb = feature_score(&b, 0.0, FeatureBaseline::NegativeStd);
        assert!((sa - sb).abs() < 1e-12);
    }

    #[test]
    fn names_roundtrip() {
        for k in FeatureBaseline::ALL {
            assert_eq!(k.name().parse::<FeatureBaseline>().unwrap(), k);
        }
        assert!("median".parse::<FeatureBaseline>().is_err());
    }
}
