//! Anomaly-map panels: input frame, forecast and normalised error map side
//! by side, rendered to PNG.

use std::path::Path;

use forecastad::model::map::raw_anomaly_map;
use forecastad::model::{anomaly_map, InferenceOptions, MapStats};
use forecastad::{Detector, Split};
use image::{Rgb, RgbImage};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::layout::{ensure_dir, write_json};

const UPSCALE: u32 = 4;
const GAP: u32 = 4;

#[derive(Debug, Clone, Serialize)]
pub struct MapPanel {
    pub day_id: String,
    pub timestamp: f64,
    pub score: f64,
    pub kind: Option<String>,
    pub size: usize,
    #[serde(skip)]
    pub input: Vec<f64>,
    #[serde(skip)]
    pub forecast: Vec<f64>,
    #[serde(skip)]
    pub map: Vec<f64>,
}

fn channel_mean(x: &[f32], size: usize) -> Vec<f64> {
    let plane = size * size;
    let channels = x.len() / plane;
    (0..plane).map(|p| (0..channels).map(|c| x[c * plane + p] as f64).sum::<f64>() / channels as f64).collect()
}

/// Map normalisation range from the validation normals.
pub fn validation_map_stats(model: &Detector, split: &Split) -> CliResult<MapStats> {
    let size = model.spec().input_size;
    let opts = InferenceOptions { keep_forecasts: true, ..Default::default() };
    let mut maps = Vec::new();
    for day in &split.validation {
        let inf = model.infer_day(day, opts)?;
        for (i, s) in day.samples.iter().enumerate() {
            if !s.y.is_anomalous() {
                maps.push(raw_anomaly_map(&inf.inputs[i], &inf.forecasts[i], size));
            }
        }
    }
    MapStats::from_maps(maps.iter().map(Vec::as_slice))
        .ok_or_else(|| CliError::Other("no normal validation samples to normalise anomaly maps".into()))
}

/// The `n` highest-scoring anomalous test samples with their maps.
pub fn top_anomalies(model: &Detector, split: &Split, n: usize) -> CliResult<Vec<MapPanel>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let stats = validation_map_stats(model, split)?;
    let size = model.spec().input_size;
    let opts = InferenceOptions { keep_forecasts: true, ..Default::default() };
    let mut panels = Vec::new();
    for day in &split.test {
        let inf = model.infer_day(day, opts)?;
        for (i, s) in day.samples.iter().enumerate() {
            if !s.y.is_anomalous() {
                continue;
            }
            panels.push(MapPanel {
                day_id: day.day_id.0.clone(),
                timestamp: s.t,
                score: inf.scores[i],
                kind: s.anomaly_kind.map(|k| k.name().to_owned()),
                size,
                input: channel_mean(&inf.inputs[i], size),
                forecast: channel_mean(&inf.forecasts[i], size),
                map: anomaly_map(&inf.inputs[i], &inf.forecasts[i], size, &stats),
            });
        }
    }
    panels.sort_by(|a, b| b.score.total_cmp(&a.score));
    panels.truncate(n);
    Ok(panels)
}

/// Piecewise-linear black, purple, orange, yellow ramp on `[0, 1]`.
pub fn heat(v: f64) -> Rgb<u8> {
    const STOPS: [(f64, [f64; 3]); 4] =
        [(0.0, [0.0, 0.0, 4.0]), (0.35, [120.0, 28.0, 109.0]), (0.7, [237.0, 105.0, 37.0]), (1.0, [252.0, 255.0, 164.0])];
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let k = STOPS.windows(2).position(|w| v <= w[1].0).unwrap_or(STOPS.len() - 2);
    let ((a, ca), (b, cb)) = (STOPS[k], STOPS[k + 1]);
    let t = (v - a) / (b - a);
    Rgb(std::array::from_fn(|c| (ca[c] + t * (cb[c] - ca[c])).round() as u8))
}

fn blit(img: &mut RgbImage, x0: u32, y0: u32, values: &[f64], size: usize, color: impl Fn(f64) -> Rgb<u8>) {
    for (p, &v) in values.iter().enumerate() {
        let (r, c) = ((p / size) as u32, (p % size) as u32);
        let px = color(v);
        for dy in 0..UPSCALE {
            for dx in 0..UPSCALE {
                img.put_pixel(x0 + c * UPSCALE + dx, y0 + r * UPSCALE + dy, px);
            }
        }
    }
}

/// One row per panel: input and forecast in grey, the map in colour.
pub fn render_panels(panels: &[MapPanel]) -> Option<RgbImage> {
    let size = panels.first()?.size as u32;
    let tile = size * UPSCALE;
    let width = 3 * tile + 4 * GAP;
    let height = panels.len() as u32 * (tile + GAP) + GAP;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let grey = |v: f64| {
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([g, g, g])
    };
    for (i, p) in panels.iter().enumerate() {
        let y = GAP + i as u32 * (tile + GAP);
        blit(&mut img, GAP, y, &p.input, p.size, grey);
        blit(&mut img, 2 * GAP + tile, y, &p.forecast, p.size, grey);
        blit(&mut img, 3 * GAP + 2 * tile, y, &p.map, p.size, heat);
    }
    Some(img)
}

pub fn save_png(img: &RgbImage, path: &Path) -> CliResult<()> {
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, image::ImageFormat::Png).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    crate::layout::write_bytes(path, bytes.get_ref())
}

#[derive(Serialize)]
struct PanelIndex<'a> {
    config_hash: &'a str,
    seed: u64,
    panels: Vec<(String, &'a MapPanel)>,
}

/// One PNG per panel plus an index describing them.
pub fn write_panels(dir: &Path, panels: &[MapPanel], seed: u64, config_hash: &str) -> CliResult<()> {
    ensure_dir(dir)?;
    let mut index = PanelIndex { config_hash, seed, panels: Vec::new() };
    for (i, p) in panels.iter().enumerate() {
        let name = format!("{i:02}_{}_{}.png", p.day_id, p.timestamp as i64);
        let img = render_panels(std::slice::from_ref(p)).expect("one panel");
        save_png(&img, &dir.join(&name))?;
        index.panels.push((name, p));
    }
    write_json(&dir.join("index.json"), &index)
}
