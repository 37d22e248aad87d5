mod common;

use forecastad::data::{DaySequence, Sample};
use forecastad::model::{squared_error, ForecastAd, ModelSpec, TrainConfig};

#[test]
fn score_is_the_elementwise_sum_of_squares() {
    // 3 x 4 x 4 fixture, summed by explicit loops.
    let x: Vec<f64> = (0..48).map(|i| (i as f64 * 0.37).sin()).collect();
    let x_hat: Vec<f64> = (0..48).map(|i| (i as f64 * 0.11).cos() * 0.5).collect();
    let mut brute = 0.0;
    for c in 0..3 {
        for r in 0..4 {
            for col in 0..4 {
                let i = (c * 4 + r) * 4 + col;
                let d = x[i] - x_hat[i];
                brute += d * d;
            }
        }
    }
    assert_eq!(squared_error(&x, &x_hat), brute);
    assert_eq!(squared_error(&x, &x), 0.0);
    assert!(squared_error(&x_hat, &x) >= 0.0);
}

fn stretched(day: &DaySequence<f32>, shift: f64, scale: f64) -> DaySequence<f32> {
    let t0 = day.samples[0].t;
    let samples: Vec<Sample<f32>> = day
        .samples
        .iter()
        .map(|s| Sample { t: shift + t0 + (s.t - t0) * scale, ..s.clone() })
        .collect();
    DaySequence::new(day.day_id.clone(), samples).unwrap()
}

#[test]
fn time_blind_model_ignores_timestamps() {
    let days = common::small_days::<f32>(1, 6);
    let mut cfg = common::config(ModelSpec::desk(), &days, 5, TrainConfig::default());
    cfg.train.use_tau = false;
    cfg.train.use_delta = false;
    let blind = ForecastAd::<f32>::new(cfg.clone()).unwrap();
    let base = blind.score_day(&days[0]).unwrap();
    assert_eq!(blind.score_day(&stretched(&days[0], 3600.0, 1.0)).unwrap(), base);
    assert_eq!(blind.score_day(&stretched(&days[0], -100.0, 1.7)).unwrap(), base);

    // Offsets are relative to the day, so a uniform shift is invisible even
    // with time encodings; rescaling the gaps is not.
    cfg.train.use_tau = true;
    cfg.train.use_delta = true;
    let seeing = ForecastAd::<f32>::new(cfg).unwrap();
    let base = seeing.score_day(&days[0]).unwrap();
    assert_eq!(seeing.score_day(&stretched(&days[0], 3600.0, 1.0)).unwrap(), base);
    assert_ne!(seeing.score_day(&stretched(&days[0], 0.0, 1.7)).unwrap(), base);
}

#[test]
fn forecast_has_the_input_shape() {
    let days = common::small_days::<f32>(1, 1);
    let model = ForecastAd::<f32>::new(common::config(ModelSpec::desk(), &days, 3, TrainConfig::default())).unwrap();
    let c = vec![0.1f32; model.spec().latent_dim];
    let out = model.forecast(&c, forecastad::data::TimeOffsets { tau: 120.0, delta: 600.0 });
    assert_eq!(out.shape, [3, 32, 32, 1]);
    assert!(out.data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
}
