//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The desk pipeline behind criteria 1, 2 and 8 takes several minutes on a
//! single core. Set `FORECASTAD_ACCEPTANCE_DIR` to keep its artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use forecastad::data::{build_context_windows, compute_time_offsets, DaySequence, Label, Sample, Segment, ThermalFrame};
use forecastad::eval::{aupr, auroc, candidate_thresholds, select_thresholds, EvalReport, TestSetup, METRICS};
use forecastad::label::{rule_r1, rule_r2, rule_r3, rule_r4, squared_diff_percentile, LabelConfig, RuleReport};
use forecastad::model::time::encode_time;
use forecastad::model::{squared_error, Batch, ForecastAd, ModelCheckpoint, ModelConfig, ModelSpec, Params, PreprocessStats, Tensor, TrainConfig};
use forecastad::simulate::{simulate_dataset, SimConfig};
use forecastad::data::CoreConfig;
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BUDGET: Duration = Duration::from_secs(15 * 60);
const DESK_SEEDS: &str = "[0,1,2,3,4]";

type Check = Result<String, String>;

fn forecastad(out: &Path, args: &[&str]) -> Result<Duration, String> {
    let clock = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_forecastad"))
        .args(args)
        .args(["--jobs", "1", "--out"])
        .arg(out)
        .env_remove("FORECASTAD_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("`forecastad {}` exited {:?}: {}", args.join(" "), o.status.code(), String::from_utf8_lossy(&o.stderr).trim()));
    }
    Ok(clock.elapsed())
}

fn read_report(path: &Path) -> Result<EvalReport, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn ts2_auroc(report: &EvalReport, detector: &str) -> Result<f64, String> {
    report
        .detectors
        .get(detector)
        .and_then(|d| d.metric(TestSetup::Ts2, "auroc"))
        .map(|a| a.mean)
        .ok_or_else(|| format!("no Ts#2 AUROC for {detector}"))
}

struct Desk {
    dir: PathBuf,
    elapsed: Duration,
    steps: Result<(), String>,
}

fn desk_pipeline(dir: PathBuf) -> Desk {
    let mut elapsed = Duration::ZERO;
    let mut steps = || -> Result<(), String> {
        elapsed += forecastad(&dir, &["simulate", "--profile", "desk", "--eval.seeds", DESK_SEEDS])?;
        for cmd in ["label", "split", "pretrain", "train", "evaluate"] {
            elapsed += forecastad(&dir, &[cmd])?;
        }
        Ok(())
    };
    let steps = steps();
    Desk { dir, elapsed, steps }
}

// ---------------------------------------------------------------------------

fn c1(desk: &Desk) -> Check {
    desk.steps.clone()?;
    let report = read_report(&desk.dir.join("reports/eval.json"))?;
    let ours = ts2_auroc(&report, "forecastad")?;
    let ae = ts2_auroc(&report, "autoencoder")?;
    let detail = format!("Ts#2 AUROC {ours:.3} vs autoencoder {ae:.3}, pipeline {:.0}s", desk.elapsed.as_secs_f64());
    if ours >= ae + 0.10 && ours >= 0.80 && desk.elapsed <= BUDGET {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c2(desk: &Desk) -> Check {
    desk.steps.clone()?;
    forecastad(&desk.dir, &["ablate", "--sweep", "time", "--ablate.time_variants", r#"["no_time"]"#])?;
    let full = ts2_auroc(&read_report(&desk.dir.join("reports/eval.json"))?, "forecastad")?;
    let blind = ts2_auroc(&read_report(&desk.dir.join("ablation/time/summary.json"))?, "no_time")?;
    let detail = format!("Ts#2 AUROC {full:.3} with time encodings, {blind:.3} without");
    if full - blind >= 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn brute_auroc(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in (0..s.len()).filter(|&i| y[i]) {
        for j in (0..s.len()).filter(|&j| !y[j]) {
            pairs += 1.0;
            num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
        }
    }
    num / pairs
}

fn brute_aupr(s: &[f64], y: &[bool]) -> f64 {
    let mut levels = s.to_vec();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let pos = y.iter().filter(|&&v| v).count() as f64;
    let (mut area, mut prev) = (0.0, 0.0);
    for v in levels {
        let flagged: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= v).collect();
        let tp = flagged.iter().filter(|&&i| y[i]).count() as f64;
        area += (tp / pos - prev) * tp / flagged.len() as f64;
        prev = tp / pos;
    }
    area
}

/// First maximiser over ascending candidates of exact rational F1 and of
/// tp * tn.
fn brute_thresholds(s: &[f64], y: &[bool]) -> (f64, f64) {
    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut cands = vec![f64::NEG_INFINITY];
    cands.extend(sorted.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    cands.push(f64::INFINITY);
    let (mut best_f, mut best_g) = ((0u64, 1u64, f64::NAN), (0u64, f64::NAN));
    let mut first = true;
    for &lambda in &cands {
        let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&v, &a) in s.iter().zip(y) {
            match (v >= lambda, a) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let (n, d) = (2 * tp, 2 * tp + fp + fn_);
        if first || n * best_f.1 > best_f.0 * d {
            best_f = (n, d, lambda);
        }
        if first || tp * tn > best_g.0 {
            best_g = (tp * tn, lambda);
        }
        first = false;
    }
    (best_f.2, best_g.1)
}

fn c3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(1..=n.max(2));
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.37).collect();
        let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        y[0] = true;
        y[1] = false;
        let a = auroc(&s, &y).map_err(|e| e.to_string())?;
        let p = aupr(&s, &y).map_err(|e| e.to_string())?;
        let (ea, ep) = ((a - brute_auroc(&s, &y)).abs(), (p - brute_aupr(&s, &y)).abs());
        worst = worst.max(ea).max(ep);
        if ea > 1e-9 || ep > 1e-9 {
            return Err(format!("instance {case}: AUROC error {ea:e}, AUPR error {ep:e}"));
        }
        let t = select_thresholds(&s, &y).map_err(|e| e.to_string())?;
        let (lf, lg) = brute_thresholds(&s, &y);
        if t.lambda_f != lf || t.lambda_g != lg {
            return Err(format!("instance {case}: thresholds ({}, {}) vs exhaustive ({lf}, {lg})", t.lambda_f, t.lambda_g));
        }
        if candidate_thresholds(&s).len() < 2 {
            return Err(format!("instance {case}: too few candidates"));
        }
    }
    Ok(format!("100 instances, max metric error {worst:e}, thresholds exact"))
}

// ---------------------------------------------------------------------------

fn gradient_errors(
    model: &mut ForecastAd<f64>,
    batch: &Batch<'_, f64>,
    count: usize,
    seed: u64,
    include: impl Fn(&str) -> bool,
) -> Result<(f64, usize), String> {
    const H: f64 = 1e-5;
    model.zero_grad();
    model.accumulate_gradients(batch);
    let mut listed = Vec::new();
    model.params("", &mut listed);
    let flat: Vec<(String, usize, f64)> = listed
        .into_iter()
        .filter(|(name, p)| p.trainable && include(name))
        .flat_map(|(name, p)| p.grad.iter().copied().enumerate().map(move |(i, g)| (name.clone(), i, g)).collect::<Vec<_>>())
        .collect();
    if flat.len() < count {
        return Err(format!("only {} parameters", flat.len()));
    }
    let nudge = |model: &mut ForecastAd<f64>, name: &str, i: usize, d: f64| {
        let mut ps = Vec::new();
        model.params_mut("", &mut ps);
        ps.into_iter().find(|(n, _)| n == name).expect("listed parameter").1.value[i] += d;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut nonzero) = (0.0f64, 0);
    for j in rand::seq::index::sample(&mut rng, flat.len(), count) {
        let (name, i, analytic) = &flat[j];
        nudge(model, name, *i, H);
        let up = model.batch_loss(batch);
        nudge(model, name, *i, -2.0 * H);
        let down = model.batch_loss(batch);
        nudge(model, name, *i, H);
        let numeric = (up - down) / (2.0 * H);
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5));
        nonzero += usize::from(*analytic != 0.0);
    }
    Ok((worst, nonzero))
}

fn small_days<S: forecastad::Scalar>(n: usize, seed: u64) -> Vec<DaySequence<S>> {
    let sim = SimConfig { height: 16, width: 16, day_length: 5400.0, clean_day_fraction: 1.0, seed, ..SimConfig::default() };
    simulate_dataset(&sim, n).expect("simulate").0
}

fn tiny_config<S: forecastad::Scalar>(days: &[DaySequence<S>], seed: u64) -> ModelConfig {
    ModelConfig {
        spec: ModelSpec::tiny(),
        core: CoreConfig { k: 4, ..CoreConfig::default() },
        train: TrainConfig { seed, ..TrainConfig::default() },
        stats: PreprocessStats::from_days(days).expect("stats"),
    }
}

fn c4() -> Check {
    let days = small_days::<f64>(1, 11);
    let mut model = ForecastAd::<f64>::new(tiny_config(&days, 5)).map_err(|e| e.to_string())?;
    let size = model.spec().input_size;
    let frames: Vec<f64> = days[0].samples[..5].iter().flat_map(|s| model.prepare_input(&s.frame).expect("frame")).collect();
    let x = Tensor::from_vec([5, 3, size, size], frames);
    let (rec, rec_nz) = gradient_errors(&mut model, &Batch::Reconstruction(&x), 150, 1, |n| !n.starts_with("context"))?;
    let prepared = model.prepare_day(&days[0]).map_err(|e| e.to_string())?;
    let targets = [0, 3, 6, 7, 12];
    let (fc, fc_nz) = gradient_errors(&mut model, &Batch::Forecast { day: &prepared, targets: &targets }, 150, 2, |_| true)?;
    let detail = format!("150 parameters per loss: reconstruction {rec:.1e} ({rec_nz} nonzero), forecasting {fc:.1e} ({fc_nz} nonzero)");
    if rec <= 1e-4 && fc <= 1e-4 && rec_nz >= 100 && fc_nz >= 100 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------

fn fixture_day(frames: Vec<ThermalFrame<f64>>) -> DaySequence<f64> {
    let samples = frames
        .into_iter()
        .enumerate()
        .map(|(i, frame)| Sample { frame, t: 60.0 * i as f64, y: Label::Normal, segment: Segment::M, day_id: "d".into(), anomaly_kind: None })
        .collect();
    DaySequence::new("d".into(), samples).expect("fixture day")
}

fn c5(desk: &Desk) -> Check {
    let cfg = LabelConfig::default();
    let f = |px: Vec<f64>| ThermalFrame::new(2, 2, px).expect("2x2");
    let mut failures = Vec::new();
    // R1: squared differences [0, 0, 0, 100]; the 95th percentile interpolates to 85.
    if squared_diff_percentile(&f(vec![0.0, 0.0, 0.0, 10.0]), &f(vec![0.0; 4]), 95.0) != 85.0 {
        failures.push("R1 percentile");
    }
    let r1 = rule_r1(&[fixture_day(vec![f(vec![1.0; 4]), f(vec![1.0; 4]), f(vec![1.0, 1.0, 1.0, 11.0])])], &cfg);
    if r1.scores[0] != [None, Some(0.0), Some(85.0)] {
        failures.push("R1 scores");
    }
    // R2: frame means 10, 12 and 3 deviate from the day mean 25/3.
    let r2 = rule_r2(&[fixture_day([10.0, 12.0, 3.0].iter().map(|&v| f(vec![v; 4])).collect())], &cfg);
    let expect = [10.0 - 25.0 / 3.0, 12.0 - 25.0 / 3.0, 3.0 - 25.0 / 3.0];
    if r2.scores[0].iter().zip(expect).any(|(s, e)| (s.unwrap_or(f64::NAN) - e).abs() > 1e-12) || !r2.flags[0][2] {
        failures.push("R2");
    }
    // R3 with templates 0 and 1: (85 + (1 + 0.85 * 80)) / 2.
    let r3 = rule_r3(
        &[fixture_day(vec![f(vec![0.0; 4]), f(vec![1.0; 4]), f(vec![0.0, 0.0, 0.0, 10.0])])],
        &LabelConfig { r3_template_count: 2, ..cfg.clone() },
    );
    if r3.scores[0][2] != Some(77.0) || r3.scores[0][0] != Some(0.5) {
        failures.push("R3");
    }
    // R4 on a 5x5 frame: largest row jump 11, mean |Sobel| over 6 positions 42/6.
    #[rustfmt::skip]
    let px = vec![
        1.0, 2.0, 4.0, 7.0, 11.0,
        0.0, 0.0, 5.0, 0.0, 0.0,
        3.0, 1.0, 4.0, 1.0, 5.0,
        9.0, 2.0, 6.0, 5.0, 3.0,
        5.0, 8.0, 9.0, 7.0, 9.0,
    ];
    let r4 = rule_r4(&ThermalFrame::new(5, 5, px).expect("5x5"), &cfg).map_err(|e| e.to_string())?;
    if r4.horizontal != 11.0 || (r4.vertical - 7.0).abs() > 1e-12 {
        failures.push("R4");
    }
    desk.steps.clone()?;
    let path = desk.dir.join("data/labelled/label_report.json");
    let artifact: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let report: RuleReport = serde_json::from_value(artifact["report"].clone()).map_err(|e| e.to_string())?;
    let agreement = report.label_agreement.ok_or("label report has no agreement")?;
    let detail = format!("fixtures {}, rule/truth agreement {:.3}", if failures.is_empty() { "exact".to_owned() } else { failures.join(", ") }, agreement);
    if failures.is_empty() && agreement >= 0.85 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------

fn score_files(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let scores = root.join("scores");
    for det in fs::read_dir(&scores).map_err(|e| format!("{}: {e}", scores.display()))? {
        let det = det.map_err(|e| e.to_string())?.path();
        if !det.is_dir() {
            continue;
        }
        for f in fs::read_dir(&det).map_err(|e| e.to_string())? {
            let f = f.map_err(|e| e.to_string())?.path();
            if f.extension().is_some_and(|e| e == "csv") {
                let key = f.strip_prefix(root).expect("under root").display().to_string();
                out.insert(key, fs::read(&f).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

fn c6() -> Check {
    let reduced = ["--set", "days=10", "--train.pretrain_epochs", "2", "--train.train_epochs", "2", "--eval.seeds", "[0,1]"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut args = vec!["simulate", "--profile", "desk"];
        args.extend(reduced);
        forecastad(dir.path(), &args)?;
        for cmd in ["label", "split", "pretrain", "train", "evaluate"] {
            forecastad(dir.path(), &[cmd])?;
        }
        runs.push(score_files(dir.path())?);
    }
    if runs[0].is_empty() {
        return Err("no score files written".into());
    }
    let differing: Vec<&String> = runs[0].keys().filter(|k| runs[1].get(*k) != Some(&runs[0][*k])).collect();
    if differing.is_empty() && runs[0].len() == runs[1].len() {
        Ok(format!("{} score files byte-identical", runs[0].len()))
    } else {
        Err(format!("differing score files: {differing:?}"))
    }
}

// ---------------------------------------------------------------------------

fn property(name: &str, cases: u32, f: impl FnOnce(&mut TestRunner) -> Result<(), String>) -> Result<(), String> {
    let mut runner = TestRunner::new_with_rng(ProptestConfig { cases, ..ProptestConfig::default() }, proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha));
    f(&mut runner).map_err(|e| format!("{name}: {e}"))
}

fn run_err<T: std::fmt::Debug>(e: proptest::test_runner::TestError<T>) -> String {
    e.to_string()
}

fn timestamps() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1u32..600, 1..60).prop_map(|gaps| {
        let mut t = 1_700_000_000.0;
        gaps.into_iter().map(|g| {
            let now = t;
            t += g as f64;
            now
        }).collect()
    })
}

fn constant_day(ts: &[f64]) -> DaySequence<f32> {
    let samples = ts
        .iter()
        .map(|&t| Sample { frame: ThermalFrame::filled(1, 1, 1.0).expect("1x1"), t, y: Label::Normal, segment: Segment::M, day_id: "p".into(), anomaly_kind: None })
        .collect();
    DaySequence::new("p".into(), samples).expect("day")
}

fn c7() -> Check {
    property("time encoding", 256, |r| {
        r.run(&(0.0f64..1e6), |s| {
            let e = encode_time::<f64>(s);
            prop_assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
            Ok(())
        })
        .map_err(run_err)?;
        let zero = encode_time::<f64>(0.0);
        if zero.chunks(2).all(|p| p == [0.0, 1.0]) { Ok(()) } else { Err(format!("encode(0) = {zero:?}")) }
    })?;
    property("score identity", 128, |r| {
        r.run(&prop::collection::vec(-1e3f64..1e3, 1..500), |x| {
            prop_assert_eq!(squared_error(&x, &x), 0.0);
            Ok(())
        })
        .map_err(run_err)
    })?;
    property("window padding", 256, |r| {
        r.run(&(timestamps(), 1usize..40), |(ts, k)| {
            let day = constant_day(&ts);
            let eps = 1e-5;
            let offsets = compute_time_offsets(&day, eps).unwrap();
            prop_assert_eq!(offsets[0].tau, eps);
            prop_assert_eq!(offsets[0].delta, eps);
            let windows = build_context_windows(&day, k, eps).unwrap();
            prop_assert_eq!(windows.len(), ts.len());
            for (i, w) in windows.iter().enumerate() {
                prop_assert_eq!(w.k(), k);
                let pad = k.saturating_sub(i);
                prop_assert!(w.context[..pad].iter().all(|e| e.padding && e.index == 0));
                prop_assert!(w.context[pad..].iter().enumerate().all(|(j, e)| !e.padding && e.index == i + j + pad - k));
                prop_assert_eq!(w.target.index, i);
            }
            Ok(())
        })
        .map_err(run_err)
    })?;
    property("checkpoint round trip", 6, |r| {
        let days = small_days::<f32>(1, 3);
        r.run(&any::<u64>(), |seed| {
            let model = ForecastAd::<f32>::new(tiny_config(&days, seed)).unwrap();
            let bytes = model.checkpoint().to_bytes().unwrap();
            let restored = ForecastAd::<f32>::from_checkpoint(&ModelCheckpoint::from_bytes(&bytes).unwrap()).unwrap();
            prop_assert_eq!(&restored.checkpoint().to_bytes().unwrap(), &bytes);
            prop_assert_eq!(restored.score_day(&days[0]).unwrap(), model.score_day(&days[0]).unwrap());
            Ok(())
        })
        .map_err(run_err)
    })?;
    property("AUROC monotone invariance", 256, |r| {
        let inst = prop::collection::vec((0i32..30, any::<bool>()), 2..200).prop_filter("both classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1));
        r.run(&inst, |v| {
            let s: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let y: Vec<bool> = v.iter().map(|p| p.1).collect();
            let base = auroc(&s, &y).unwrap();
            for t in [|x: f64| 3.0 * x - 7.0, |x: f64| x.exp(), |x: f64| (x + 1.0).ln(), |x: f64| x * x * x] {
                let moved: Vec<f64> = s.iter().map(|&x| t(x)).collect();
                prop_assert_eq!(auroc(&moved, &y).unwrap(), base);
            }
            Ok(())
        })
        .map_err(run_err)
    })?;
    property("R1/R3 offset invariance", 64, |r| {
        let frames = prop::collection::vec(prop::collection::vec(100.0f64..400.0, 16), 3..12);
        r.run(&(frames, -100.0f64..100.0), |(frames, c)| {
            let cfg = LabelConfig { r3_template_count: 2, ..LabelConfig::default() };
            let day = |off: f64| fixture_day(frames.iter().map(|px| ThermalFrame::new(4, 4, px.iter().map(|v| v + off).collect()).unwrap()).collect());
            let (a, b) = (day(0.0), day(c));
            for (x, y) in [(rule_r1(&[a.clone()], &cfg), rule_r1(&[b.clone()], &cfg)), (rule_r3(&[a.clone()], &cfg), rule_r3(&[b.clone()], &cfg))] {
                for (u, v) in x.scores[0].iter().zip(&y.scores[0]) {
                    match (u, v) {
                        (Some(u), Some(v)) => prop_assert!((u - v).abs() <= 1e-6 * u.abs().max(1.0), "{} vs {}", u, v),
                        (None, None) => {}
                        _ => prop_assert!(false, "defined on one side only"),
                    }
                }
            }
            Ok(())
        })
        .map_err(run_err)
    })?;
    Ok("time encoding, score identity, window padding, checkpoint, AUROC and R1/R3 invariants hold".into())
}

fn c8(desk: &Desk) -> Check {
    desk.steps.clone()?;
    let report = read_report(&desk.dir.join("reports/eval.json"))?;
    let seeds = 5;
    let mut missing = Vec::new();
    for (name, det) in &report.detectors {
        if det.seeds.len() != seeds {
            missing.push(format!("{name}: {} seeds", det.seeds.len()));
        }
        for ts in TestSetup::ALL {
            for m in METRICS {
                if det.metric(ts, m).is_none_or(|a| a.n != seeds) {
                    missing.push(format!("{name} {ts} {m}"));
                }
            }
        }
    }
    if report.detectors.len() < 6 {
        missing.push(format!("{} detectors", report.detectors.len()));
    }
    if missing.is_empty() {
        Ok(format!("6 commands exited 0; {} detectors x 3 setups x {} metrics over {seeds} seeds", report.detectors.len(), METRICS.len()))
    } else {
        Err(format!("unpopulated: {}", missing.join("; ")))
    }
}

fn main() {
    let keep = std::env::var_os("FORECASTAD_ACCEPTANCE_DIR").map(PathBuf::from);
    let temp = tempfile::tempdir().expect("tempdir");
    let desk = desk_pipeline(keep.unwrap_or_else(|| temp.path().join("desk")));

    let results: Vec<(u8, &str, Check)> = vec![
        (1, "detection quality on ramps", c1(&desk)),
        (2, "time-encoding ablation", c2(&desk)),
        (3, "metrics and thresholds", c3()),
        (4, "gradient check", c4()),
        (5, "labelling rules", c5(&desk)),
        (6, "determinism", c6()),
        (7, "invariants", c7()),
        (8, "desk pipeline", c8(&desk)),
    ];
    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("C{id} PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("C{id} FAIL {name}: {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
