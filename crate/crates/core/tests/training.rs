mod common;

use forecastad::data::{build_context_windows, DaySequence};
use forecastad::model::{Batch, ForecastAd, ModelCheckpoint, ModelSpec, Params, Tensor, TrainConfig};

fn fifty_frames() -> Vec<DaySequence<f32>> {
    let mut days = common::small_days::<f32>(3, 4);
    let mut left = 50;
    for d in &mut days {
        let take = left.min(d.len());
        d.samples.truncate(take);
        left -= take;
    }
    assert_eq!(left, 0);
    days.retain(|d| !d.is_empty());
    days
}

#[test]
fn pretraining_halves_the_loss_on_fifty_frames() {
    let days = fifty_frames();
    let train = TrainConfig { pretrain_epochs: 15, batch_size: 10, ..TrainConfig::default() };
    let mut model = ForecastAd::<f32>::new(common::config(ModelSpec::desk(), &days, 5, train)).unwrap();
    let report = model.pretrain(&days).unwrap();
    let last = *report.epoch_losses.last().unwrap();
    assert!(report.epoch_losses.iter().all(|&l| l >= 0.0));
    assert!(last <= 0.5 * report.initial_loss, "initial {} final {last}", report.initial_loss);

    // A trained frame reconstructs better than the same pixels shuffled.
    let frame = &days[0].samples[10].frame;
    let x = model.prepare_input(frame).unwrap();
    let size = model.spec().input_size;
    let mut shuffled = x.clone();
    let n = shuffled.len();
    for i in 0..n {
        shuffled.swap(i, (i * 7919 + 13) % n);
    }
    let err = |v: &[f32]| {
        let t = Tensor::from_vec([1, 3, size, size], v.to_vec());
        forecastad::model::squared_error(v, &model.reconstruct(&t, false).data)
    };
    assert!(err(&x) < err(&shuffled));
}

#[test]
fn pretrained_weights_lower_the_initial_forecasting_loss() {
    let days = common::small_days::<f32>(3, 8);
    let base = TrainConfig { pretrain_epochs: 10, train_epochs: 2, batch_size: 16, ..TrainConfig::default() };
    let cfg = common::config(ModelSpec::desk(), &days, 5, base.clone());
    let mut ae = ForecastAd::<f32>::new(cfg.clone()).unwrap();
    ae.pretrain(&days).unwrap();

    let mut warm = ForecastAd::from_pretrained(cfg.clone(), &ae.checkpoint()).unwrap();
    let warm_report = warm.train(&days).unwrap();
    let mut cold_cfg = cfg;
    cold_cfg.train.use_pretrained = false;
    let mut cold = ForecastAd::<f32>::new(cold_cfg).unwrap();
    let cold_report = cold.train(&days).unwrap();
    assert!(
        warm_report.initial_loss < cold_report.initial_loss,
        "pretrained {} vs random {}",
        warm_report.initial_loss,
        cold_report.initial_loss
    );
    assert!(cold_report.epoch_losses.last() < cold_report.epoch_losses.first());
}

#[test]
fn every_parameter_receives_a_gradient() {
    let days = common::small_days::<f64>(1, 2);
    let mut model = ForecastAd::<f64>::new(common::config(ModelSpec::desk(), &days, 4, TrainConfig::default())).unwrap();
    let prepared = model.prepare_day(&days[0]).unwrap();
    let targets: Vec<usize> = (0..prepared.windows.len()).step_by(2).collect();
    model.zero_grad();
    model.accumulate_gradients(&Batch::Forecast { day: &prepared, targets: &targets });
    let mut params = Vec::new();
    model.params("", &mut params);
    for (name, p) in params.into_iter().filter(|(_, p)| p.trainable) {
        assert!(p.grad.iter().any(|&g| g != 0.0), "{name} has an all-zero gradient");
        assert!(p.grad.iter().all(|g| g.is_finite()), "{name} has a non-finite gradient");
    }
}

fn trained(days: &[DaySequence<f32>]) -> ForecastAd<f32> {
    let train = TrainConfig { pretrain_epochs: 2, train_epochs: 2, batch_size: 16, seed: 42, ..TrainConfig::default() };
    let cfg = common::config(ModelSpec::desk(), days, 5, train);
    let mut ae = ForecastAd::<f32>::new(cfg.clone()).unwrap();
    ae.pretrain(days).unwrap();
    let mut model = ForecastAd::from_pretrained(cfg, &ae.checkpoint()).unwrap();
    model.train(days).unwrap();
    model
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let days = common::small_days::<f32>(2, 3);
    let a = trained(&days);
    let b = trained(&days);
    let bytes = a.checkpoint().to_bytes().unwrap();
    assert_eq!(bytes, b.checkpoint().to_bytes().unwrap());
    let scores = a.score_day(&days[1]).unwrap();
    assert_eq!(scores, b.score_day(&days[1]).unwrap());
    assert!(scores.iter().all(|s| s.is_finite() && *s >= 0.0));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    a.checkpoint().save(&path).unwrap();
    let loaded = ModelCheckpoint::<f32>::load(&path).unwrap();
    assert_eq!(loaded, a.checkpoint());
    let restored = ForecastAd::from_checkpoint(&loaded).unwrap();
    assert_eq!(restored.score_day(&days[1]).unwrap(), scores);

    // f64 readers refuse f32 blobs.
    assert!(ModelCheckpoint::<f64>::from_bytes(&bytes).is_err());
    assert!(ModelCheckpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn single_window_scoring_matches_the_batched_path() {
    let days = common::small_days::<f32>(2, 9);
    let model = trained(&days);
    let day = &days[0];
    let windows = build_context_windows(day, model.config.core.k, model.config.core.epsilon).unwrap();
    let batched = model.score_day(day).unwrap();
    for (w, &s) in windows.iter().zip(&batched) {
        let single = model.score(day, w).unwrap();
        assert!((single - s).abs() <= 1e-4 * s.max(1.0), "window {}: {single} vs {s}", w.target.index);
    }
}
