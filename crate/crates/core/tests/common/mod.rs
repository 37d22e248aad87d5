#![allow(dead_code)]

use forecastad::data::{CoreConfig, DaySequence};
use forecastad::model::{ModelConfig, ModelSpec, PreprocessStats, TrainConfig};
use forecastad::simulate::{simulate_dataset, SimConfig};
use forecastad::Scalar;

/// Short clean days with small frames.
pub fn small_days<S: Scalar>(n: usize, seed: u64) -> Vec<DaySequence<S>> {
    let sim = SimConfig {
        height: 16,
        width: 16,
        day_length: 5400.0,
        clean_day_fraction: 1.0,
        seed,
        ..SimConfig::default()
    };
    simulate_dataset(&sim, n).unwrap().0
}

pub fn config<S: Scalar>(spec: ModelSpec, days: &[DaySequence<S>], k: usize, train: TrainConfig) -> ModelConfig {
    ModelConfig {
        spec,
        core: CoreConfig { k, ..CoreConfig::default() },
        train,
        stats: PreprocessStats::from_days(days).unwrap(),
    }
}
