//! Sinusoidal encodings of inter-arrival and elapsed time.

use crate::data::TimeOffsets;
use crate::scalar::Scalar;

pub const TIME_DIM: usize = 16;
pub const TIME_PERIOD: f64 = 1000.0;

/// Encodes `minutes` as interleaved `sin`/`cos` pairs at geometrically spaced
/// frequencies: component `2j` is `sin(s / P^(2j/d))`, `2j+1` the cosine.
pub fn encode_time<S: Scalar>(minutes: f64) -> [S; TIME_DIM] {
    let mut out = [S::zero(); TIME_DIM];
    for j in 0..TIME_DIM / 2 {
        let arg = minutes / TIME_PERIOD.powf((2 * j) as f64 / TIME_DIM as f64);
        out[2 * j] = S::of(arg.sin());
        out[2 * j + 1] = S::of(arg.cos());
    }
    out
}

/// Which time signals reach the model; disabled ones are replaced by zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TimeToggles {
    pub use_tau: bool,
    pub use_delta: bool,
}

impl Default for TimeToggles {
    fn default() -> Self {
        Self { use_tau: true, use_delta: true }
    }
}

/// `psi(tau) + Psi(delta)` for offsets given in seconds.
pub fn time_features<S: Scalar>(offsets: TimeOffsets, toggles: TimeToggles) -> [S; TIME_DIM] {
    let mut out = [S::zero(); TIME_DIM];
    if toggles.use_tau {
        let e = encode_time::<S>(offsets.tau / 60.0);
        out.iter_mut().zip(e).for_each(|(o, v)| *o += v);
    }
    if toggles.use_delta {
        let e = encode_time::<S>(offsets.delta / 60.0);
        out.iter_mut().zip(e).for_each(|(o, v)| *o += v);
    }
    out
}

/// Concatenates a latent vector with the summed time encodings.
pub fn joint_embedding<S: Scalar>(z: &[S], psi: &[S; TIME_DIM], big_psi: &[S; TIME_DIM], toggles: TimeToggles) -> Vec<S> {
    let mut out = Vec::with_capacity(z.len() + TIME_DIM);
    out.extend_from_slice(z);
    for j in 0..TIME_DIM {
        let a = if toggles.use_tau { psi[j] } else { S::zero() };
        let b = if toggles.use_delta { big_psi[j] } else { S::zero() };
        out.push(a + b);
    }
    out
}
