//! Forecasting-based anomaly detection on irregularly sampled sequences of
//! thermal images.
//!
//! The crate is organised bottom-up: [`data`] holds the domain model,
//! [`simulate`] generates synthetic operational days, [`label`] implements
//! the rule-based labelling engine, [`model`] the detector networks and their
//! training, [`baselines`] the comparison detectors and [`eval`] the metrics
//! and reporting. Numeric code is generic over [`Scalar`]; the aliases below
//! pin the common instantiations.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod label;
pub mod model;
pub mod scalar;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Frame = data::ThermalFrame<f32>;
pub type Day = data::DaySequence<f32>;
pub type Split = data::DatasetSplit<f32>;
pub type Detector = model::ForecastAd<f32>;
pub type DetectorF64 = model::ForecastAd<f64>;
pub type Checkpoint = model::ModelCheckpoint<f32>;
