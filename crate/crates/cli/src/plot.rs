//! Figure files: daily mean-temperature curves, the inter-arrival histogram,
//! score timelines and anomaly-map panels.

use std::path::{Path, PathBuf};

use forecastad::data::Manifest;
use forecastad::eval::select_thresholds;
use forecastad::Day;
use plotters::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::{load_days, load_split};
use crate::error::{CliError, CliResult};
use crate::layout::{ensure_dir, require, require_dataset, write_bytes, write_json, Layout};
use crate::maps::{render_panels, save_png, top_anomalies};
use crate::models::load_checkpoint;
use crate::scoring::{read_scores, ScoreRow};

const SIZE: (u32, u32) = (900, 480);
const TIMELINE_DAYS: usize = 4;

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Other(format!("plotting: {e}"))
}

fn finish(svg: String, path: &Path) -> CliResult<PathBuf> {
    write_bytes(path, svg.as_bytes())?;
    Ok(path.to_path_buf())
}

fn hours(day: &Day, t: f64) -> f64 {
    (t - day.t0) / 3600.0
}

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Frame-mean temperature over the operational day, one curve per day;
/// days carrying an anomaly are drawn in red.
pub fn daily_mean_curves(days: &[Day], path: &Path) -> CliResult<PathBuf> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let x_max = days.iter().filter_map(|d| d.samples.last().map(|s| hours(d, s.t))).fold(1.0, f64::max);
        let (y_lo, y_hi) = axis_range(days.iter().flat_map(|d| d.frame_means()).map(|m| m as f64));
        let mut chart = ChartBuilder::on(&root)
            .caption("Daily mean temperature", ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(52)
            .build_cartesian_2d(0.0..x_max, y_lo..y_hi)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("hours since first frame")
            .y_desc("mean temperature")
            .draw()
            .map_err(plot_err)?;
        for day in days {
            let color = if day.samples.iter().any(|s| s.anomaly_kind.is_some() || s.y.is_anomalous()) {
                RED.mix(0.45)
            } else {
                BLUE.mix(0.6)
            };
            let pts: Vec<(f64, f64)> =
                day.samples.iter().map(|s| (hours(day, s.t), s.frame.mean() as f64)).collect();
            chart.draw_series(LineSeries::new(pts, color.stroke_width(1))).map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    finish(svg, path)
}

/// Histogram of gaps between consecutive frames, in seconds.
pub fn interarrival_histogram(days: &[Day], path: &Path, bin: f64) -> CliResult<PathBuf> {
    let gaps: Vec<f64> = days.iter().flat_map(|d| d.samples.windows(2).map(|w| w[1].t - w[0].t)).collect();
    let max_gap = gaps.iter().copied().fold(bin, f64::max);
    let n_bins = (max_gap / bin).floor() as usize + 1;
    let mut counts = vec![0u32; n_bins];
    for g in &gaps {
        counts[((g / bin).floor() as usize).min(n_bins - 1)] += 1;
    }
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let y_max = counts.iter().copied().max().unwrap_or(1).max(1);
        let mut chart = ChartBuilder::on(&root)
            .caption("Inter-arrival times", ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(52)
            .build_cartesian_2d(0.0..n_bins as f64 * bin, 0u32..y_max + y_max / 10 + 1)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("seconds").y_desc("count").draw().map_err(plot_err)?;
        chart
            .draw_series(counts.iter().enumerate().map(|(i, &c)| {
                let x0 = i as f64 * bin;
                Rectangle::new([(x0, 0), (x0 + bin, c)], BLUE.mix(0.7).filled())
            }))
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    finish(svg, path)
}

/// Score against time for one test day, anomalous samples marked, with the
/// max-F1 threshold drawn across.
pub fn score_timeline(day_id: &str, rows: &[&ScoreRow], lambda: Option<f64>, path: &Path) -> CliResult<PathBuf> {
    let t0 = rows.first().map_or(0.0, |r| r.timestamp);
    let pts: Vec<(f64, f64, bool)> =
        rows.iter().map(|r| ((r.timestamp - t0) / 3600.0, r.score, r.anomalous == 1)).collect();
    let x_max = pts.last().map_or(1.0, |p| p.0.max(1e-3));
    let (y_lo, y_hi) = axis_range(pts.iter().map(|p| p.1).chain(lambda.filter(|l| l.is_finite())));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("Anomaly score, {day_id}"), ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(60)
            .build_cartesian_2d(0.0..x_max, y_lo..y_hi)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("hours since first frame").y_desc("score").draw().map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(pts.iter().map(|p| (p.0, p.1)), BLACK.stroke_width(1)))
            .map_err(plot_err)?;
        chart
            .draw_series(pts.iter().filter(|p| p.2).map(|p| Circle::new((p.0, p.1), 4, RED.filled())))
            .map_err(plot_err)?;
        if let Some(l) = lambda.filter(|l| l.is_finite()) {
            chart.draw_series(LineSeries::new([(0.0, l), (x_max, l)], BLUE.stroke_width(1))).map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    finish(svg, path)
}

pub fn plot(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let layout = Layout::new(&cfg.out_dir);
    let dir = layout.plots();
    ensure_dir(&dir)?;
    let raw = layout.raw();
    require_dataset(&raw, "simulated dataset", "simulate")?;
    let manifest = Manifest::load(&raw)?;
    let days = load_days(&raw, &manifest.days)?;
    let mut written = vec![
        daily_mean_curves(&days, &dir.join("daily_mean_temperature.svg"))?,
        interarrival_histogram(&days, &dir.join("interarrival_histogram.svg"), 10.0)?,
    ];

    let seed = cfg.eval.seeds[0];
    let csv = layout.score_csv("forecastad", seed);
    require(&csv, "forecaster scores", "evaluate")?;
    let rows = read_scores(&csv)?;
    let (vs, vy): (Vec<f64>, Vec<bool>) =
        rows.iter().filter(|r| r.set == "validation").map(|r| (r.score, r.anomalous == 1)).unzip();
    let lambda = select_thresholds(&vs, &vy).ok().map(|t| t.lambda_f);
    let mut test_days: Vec<&str> = Vec::new();
    for r in rows.iter().filter(|r| r.set == "test" && r.anomalous == 1) {
        if !test_days.contains(&r.day_id.as_str()) {
            test_days.push(&r.day_id);
        }
    }
    for day in test_days.into_iter().take(TIMELINE_DAYS) {
        let day_rows: Vec<&ScoreRow> = rows.iter().filter(|r| r.set == "test" && r.day_id == day).collect();
        written.push(score_timeline(day, &day_rows, lambda, &dir.join(format!("score_timeline_{day}.svg")))?);
    }

    let model = load_checkpoint(&layout.forecaster(seed), "forecaster checkpoint", "train")?;
    let split = load_split(cfg)?;
    let panels = top_anomalies(&model, &split, cfg.eval.map_samples)?;
    if let Some(img) = render_panels(&panels) {
        let path = dir.join("anomaly_maps.png");
        save_png(&img, &path)?;
        written.push(path);
        write_json(&dir.join("anomaly_maps.json"), &panels)?;
    }
    write_json(&dir.join("index.json"), &serde_json::json!({ "config_hash": cfg.hash(), "seed": seed, "files": written }))?;
    Ok(written)
}
