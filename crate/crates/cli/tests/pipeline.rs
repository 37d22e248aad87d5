use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use forecastad::eval::{EvalReport, TestSetup};
use forecastad_cli::ExperimentConfig;

fn forecastad(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forecastad"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FORECASTAD_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = forecastad(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn tiny_pipeline(out: &Path) {
    ok(out, &["simulate", "--profile", "tiny"]);
    for cmd in ["label", "split", "pretrain", "train", "evaluate"] {
        ok(out, &[cmd]);
    }
}

#[test]
fn tiny_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    tiny_pipeline(out);

    let report: EvalReport = serde_json::from_str(&fs::read_to_string(out.join("reports/eval.json")).unwrap()).unwrap();
    let cfg = ExperimentConfig::from_file(&out.join("config.json")).unwrap();
    assert_eq!(report.config_hash.as_deref(), Some(cfg.hash().as_str()));
    for name in ["forecastad", "autoencoder", "time_of_day", "negative_mean", "negative_max", "negative_std"] {
        let det = &report.detectors[name];
        assert!(det.metric(TestSetup::Ts3, "auroc").is_some(), "{name} has no Ts#3 AUROC");
    }
    // Feature baselines do not depend on the model seed.
    let csv = fs::read_to_string(out.join("scores/negative_mean/seed-0.csv")).unwrap();
    assert!(csv.starts_with(&format!("# detector=negative_mean seed=0 config_hash={}", cfg.hash())));
    for stage in ["data/raw", "data/labelled", "data/split", "models", "scores", "reports"] {
        assert!(out.join(stage).join("config.json").exists(), "{stage} lacks its config");
    }

    ok(out, &["score"]);
    assert!(out.join("scores/maps/seed-0/index.json").exists());
    ok(out, &["plot"]);
    for f in ["daily_mean_temperature.svg", "interarrival_histogram.svg", "anomaly_maps.png"] {
        assert!(out.join("plots").join(f).exists(), "missing plot {f}");
    }
    ok(out, &["clean-deployment"]);
    let cleaning: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("cleaning/report.json")).unwrap()).unwrap();
    assert!(cleaning["threshold"].as_f64().unwrap() > 0.0);

    let o = ok(out, &["ablate", "--sweep", "k"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("k4"));
    let ablation = out.join("ablation/k");
    let per_k: Vec<_> = ["k1.json", "k4.json"].iter().map(|f| ablation.join(f)).collect();
    assert!(per_k.iter().all(|p| p.exists()));
    let summary: EvalReport = serde_json::from_str(&fs::read_to_string(ablation.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.detectors.len(), 2);

    // Evaluation is a pure function of the checkpoints.
    let before = fs::read(out.join("reports/eval.json")).unwrap();
    ok(out, &["evaluate"]);
    assert_eq!(before, fs::read(out.join("reports/eval.json")).unwrap());
}

#[test]
fn identical_runs_write_identical_scores() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    tiny_pipeline(a.path());
    tiny_pipeline(b.path());
    for det in ["forecastad", "autoencoder"] {
        let rel = format!("scores/{det}/seed-0.csv");
        assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap(), "{rel} differs");
    }
}

#[test]
fn missing_prerequisite_names_producer() {
    let dir = tempfile::tempdir().unwrap();
    let o = forecastad(dir.path(), &["train", "--profile", "tiny"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `forecastad split`"));

    ok(dir.path(), &["simulate", "--profile", "tiny"]);
    let o = forecastad(dir.path(), &["split"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `forecastad label`"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["simulate", "--profile", "tiny", "--train.learning_rate", "0.1"][..],
        &["simulate", "--profile", "tiny", "--train.lr", "-1"],
        &["simulate", "--profile", "huge"],
        &["simulate", "--profile", "tiny", "--jobs", "0"],
        &["ablate", "--profile", "tiny", "--sweep", "depth"],
    ] {
        assert_eq!(forecastad(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
    assert!(!dir.path().join("data").exists());
}

#[test]
fn overrides_and_seed_variable_reach_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_forecastad"))
        .args(["simulate", "--profile", "tiny", "--set", "days=3", "--set", "sim.seed=9", "--eval.seeds=[0,1]"])
        .arg("--out")
        .arg(dir.path())
        .env("FORECASTAD_SEED", "40")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = ExperimentConfig::from_file(&dir.path().join("data/raw/config.json")).unwrap();
    assert_eq!(cfg.days, 3);
    assert_eq!(cfg.sim.seed, 9);
    assert_eq!(cfg.eval.seeds, vec![40, 41]);
    assert_eq!(cfg.train.seed, 40);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("data/raw/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["days"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["config_hash"].as_str(), Some(cfg.hash().as_str()));
}

#[test]
fn dry_run_prints_plan_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = ok(dir.path(), &["evaluate", "--profile", "tiny", "--dry-run"]);
    let plan = String::from_utf8_lossy(&o.stdout);
    assert!(plan.contains("plan: forecastad evaluate"));
    assert!(plan.contains("missing, run `forecastad train`"));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}
