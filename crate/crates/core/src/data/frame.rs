use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One `height x width` temperature grid in degrees Celsius, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalFrame<S> {
    height: usize,
    width: usize,
    pixels: Vec<S>,
}

impl<S: Scalar> ThermalFrame<S> {
    /// Builds a frame, rejecting non-finite or negative temperatures.
    pub fn new(height: usize, width: usize, pixels: Vec<S>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidFrame(format!("empty dimensions {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::InvalidFrame(format!(
                "{} pixels for a {height}x{width} grid",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite() || *p < S::zero()) {
            return Err(Error::InvalidFrame(format!("pixel {i} is {}", pixels[i])));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, value: S) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Skips validation; callers guarantee the invariants (clamped output).
    pub(crate) fn from_raw(height: usize, width: usize, pixels: Vec<S>) -> Self {
        debug_assert_eq!(pixels.len(), height * width);
        Self { height, width, pixels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[S] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<S> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> S {
        self.pixels[row * self.width + col]
    }

    pub fn mean(&self) -> S {
        let sum: f64 = self.pixels.iter().map(|p| p.f64()).sum();
        S::of(sum / self.pixels.len() as f64)
    }

    pub fn max(&self) -> S {
        self.pixels.iter().copied().fold(S::neg_infinity(), S::max)
    }

    pub fn min(&self) -> S {
        self.pixels.iter().copied().fold(S::infinity(), S::min)
    }

    /// Population standard deviation.
    pub fn std(&self) -> S {
        let n = self.pixels.len() as f64;
        let mean = self.mean().f64();
        let var = self.pixels.iter().map(|p| (p.f64() - mean).powi(2)).sum::<f64>() / n;
        S::of(var.sqrt())
    }

    /// Mean of each column, left to right.
    pub fn column_means(&self) -> Vec<S> {
        (0..self.width)
            .map(|c| {
                let s: f64 = (0..self.height).map(|r| self.get(r, c).f64()).sum();
                S::of(s / self.height as f64)
            })
            .collect()
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self::from_raw(self.height, self.width, self.pixels.iter().map(|&p| f(p)).collect())
    }

    pub fn cast<T: Scalar>(&self) -> ThermalFrame<T> {
        ThermalFrame::from_raw(
            self.height,
            self.width,
            self.pixels.iter().map(|p| T::of(p.f64())).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_nan() {
        assert!(ThermalFrame::new(1, 2, vec![1.0f32, -0.5]).is_err());
        assert!(ThermalFrame::new(1, 2, vec![1.0f64, f64::NAN]).is_err());
        assert!(ThermalFrame::new(2, 2, vec![1.0f64; 3]).is_err());
        assert!(ThermalFrame::new(0, 2, Vec::<f64>::new()).is_err());
    }

    #[test]
    fn statistics() {
        let f = ThermalFrame::new(2, 2, vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.mean(), 2.5);
        assert_eq!(f.max(), 4.0);
        assert_eq!(f.min(), 1.0);
        assert!((f.std() - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.column_means(), vec![2.0, 3.0]);
    }
}
