//! Pixel-level anomaly maps from a frame and its forecast.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub const MAP_SIGMA: f64 = 4.0;

/// Range of blurred error values over validation normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapStats {
    pub min: f64,
    pub max: f64,
}

impl MapStats {
    pub fn from_maps<'a>(maps: impl IntoIterator<Item = &'a [f64]>) -> Option<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for m in maps {
            for &v in m {
                min = min.min(v);
                max = max.max(v);
            }
        }
        min.is_finite().then_some(Self { min, max })
    }
}

/// Channel-averaged squared difference between two `3 x size x size` tensors.
pub fn error_map<S: Scalar>(x: &[S], x_hat: &[S], size: usize) -> Vec<f64> {
    let plane = size * size;
    let channels = x.len() / plane;
    (0..plane)
        .map(|p| {
            (0..channels)
                .map(|c| (x[c * plane + p].f64() - x_hat[c * plane + p].f64()).powi(2))
                .sum::<f64>()
                / channels as f64
        })
        .collect()
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (2.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Half-sample symmetric index reflection (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur with a kernel truncated at two standard deviations.
pub fn gaussian_blur(map: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; map.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * map[y * width + reflect(x as isize + k as isize - r, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; map.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[reflect(y as isize + k as isize - r, height) * width + x])
                .sum();
        }
    }
    out
}

/// Blurred error map before normalisation.
pub fn raw_anomaly_map<S: Scalar>(x: &[S], x_hat: &[S], size: usize) -> Vec<f64> {
    gaussian_blur(&error_map(x, x_hat, size), size, size, MAP_SIGMA)
}

/// Blurred error map scaled into `[0, 1]` by the validation range.
pub fn anomaly_map<S: Scalar>(x: &[S], x_hat: &[S], size: usize, stats: &MapStats) -> Vec<f64> {
    let raw = raw_anomaly_map(x, x_hat, size);
    let span = stats.max - stats.min;
    if !(span > 0.0) {
        log::warn!("degenerate anomaly map range [{}, {}]; returning zeros", stats.min, stats.max);
        return vec![0.0; raw.len()];
    }
    raw.into_iter().map(|v| ((v - stats.min) / span).clamp(0.0, 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_give_zero_map() {
        let x = vec![0.3f32; 3 * 16 * 16];
        let stats = MapStats { min: 0.0, max: 1.0 };
        assert!(anomaly_map(&x, &x, 16, &stats).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn impulse_matches_analytic_gaussian() {
        let n = 41;
        let mut m = vec![0.0; n * n];
        m[20 * n + 20] = 1.0;
        let out = gaussian_blur(&m, n, n, MAP_SIGMA);
        let z: f64 = (-8..=8).map(|k: i32| (-(k * k) as f64 / 32.0).exp()).sum();
        for y in 0..n {
            for x in 0..n {
                let (dy, dx) = (y as i32 - 20, x as i32 - 20);
                let expected = if dy.abs() <= 8 && dx.abs() <= 8 {
                    (-((dx * dx + dy * dy) as f64) / 32.0).exp() / (z * z)
                } else {
                    0.0
                };
                assert!((out[y * n + x] - expected).abs() < 1e-6);
            }
        }
        let argmax = out.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        assert_eq!(argmax, 20 * n + 20);
    }

    #[test]
    fn blur_preserves_mass_with_reflection() {
        let n = 9;
        let mut m = vec![0.0; n * n];
        m[0] = 1.0;
        let out = gaussian_blur(&m, n, n, 2.0);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(-5, 4), 3);
    }

    #[test]
    fn normalisation_clamps() {
        let mut x = vec![0.0f64; 3 * 8 * 8];
        let y = vec![0.0f64; 3 * 8 * 8];
        x[27] = 1.0;
        let stats = MapStats { min: 0.0, max: 1e-6 };
        let m = anomaly_map(&x, &y, 8, &stats);
        assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(anomaly_map(&x, &y, 8, &MapStats { min: 1.0, max: 1.0 }).iter().all(|v| *v == 0.0));
    }
}
