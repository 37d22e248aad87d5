//! Small descriptive statistics shared by the labelling rules and reports.

use crate::scalar::Scalar;

/// `p`-th percentile (0..=100) with linear interpolation between order
/// statistics (position `p/100 * (n-1)`). Returns `None` for empty input.
pub fn percentile<S: Scalar>(values: &[S], p: f64) -> Option<S> {
    let mut sorted: Vec<S> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("percentile of NaN"));
    percentile_sorted(&sorted, p)
}

pub fn percentile_sorted<S: Scalar>(sorted: &[S], p: f64) -> Option<S> {
    if sorted.is_empty() {
        return None;
    }
    // Work in units of 1/100 so integral percentiles interpolate exactly.
    let scaled = p.clamp(0.0, 100.0) * (sorted.len() - 1) as f64;
    let lo = ((scaled / 100.0).floor() as usize).min(sorted.len() - 1);
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = S::of((scaled - 100.0 * lo as f64) / 100.0);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn mean<S: Scalar>(values: &[S]) -> Option<S> {
    if values.is_empty() {
        return None;
    }
    let sum: f64 = values.iter().map(|v| v.f64()).sum();
    Some(S::of(sum / values.len() as f64))
}

/// Sample mean and standard error (`std / sqrt(n)`, n-1 denominator).
/// A single observation has standard error zero.
pub fn mean_and_stderr(values: &[f64]) -> Option<(f64, f64)> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some((m, 0.0));
    }
    let n = values.len() as f64;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    Some((m, (var / n).sqrt()))
}

/// Centered running median with the window truncated at the edges.
pub fn running_median<S: Scalar>(values: &[S], window: usize) -> Vec<S> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            percentile(&values[lo..hi], 50.0).expect("nonempty window")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_linear_interpolation() {
        let v = [0.0, 0.0, 0.0, 100.0];
        assert_eq!(percentile(&v, 95.0), Some(85.0));
        assert_eq!(percentile(&v, 100.0), Some(100.0));
        assert_eq!(percentile(&v, 0.0), Some(0.0));
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), Some(2.0));
        assert_eq!(percentile::<f64>(&[], 50.0), None);
    }

    #[test]
    fn stderr_of_one_is_zero() {
        assert_eq!(mean_and_stderr(&[0.7]), Some((0.7, 0.0)));
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn running_median_ignores_single_outlier() {
        let v = [5.0, 5.0, 5.0, -100.0, 5.0, 5.0, 5.0];
        assert!(running_median(&v, 5).iter().all(|&x| x == 5.0));
        assert_eq!(running_median(&[1.0, 9.0], 5), vec![5.0, 5.0]);
    }
}
