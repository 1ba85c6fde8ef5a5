//! Synthetic free decays with an amplitude-dependent frequency.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::nonlinear::NonlinearCoefficients;
use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::records::RingdownRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingdownSpec {
    /// Small-amplitude frequency [Hz].
    pub frequency: f64,
    /// Amplitude decay time [s]; infinite for no damping.
    pub tau: f64,
    /// Initial amplitude, in the units of the mode coordinate.
    pub amplitude: f64,
    /// Softening law; `None` for a linear oscillator.
    pub nonlinear: Option<NonlinearCoefficients>,
    pub sample_rate: f64,
    pub duration: f64,
    /// Standard deviation of the additive white noise.
    pub noise: f64,
    pub seed: u64,
}

/// A0·e^(−t/τ)·cos φ(t) with dφ/dt = ω0(1 + c·A(t)²), plus Gaussian noise.
/// The phase is integrated in closed form, so the record has no
/// time-stepping error.
pub fn synthesize_ringdown(spec: &RingdownSpec) -> Result<RingdownRecord> {
    require_positive("frequency", spec.frequency)?;
    require_positive("sample_rate", spec.sample_rate)?;
    require_positive("duration", spec.duration)?;
    require_non_negative("amplitude", spec.amplitude)?;
    require_non_negative("noise", spec.noise)?;
    if !(spec.tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be > 0, got {}", spec.tau)));
    }
    if spec.sample_rate <= 4.0 * spec.frequency {
        return Err(Error::invalid(
            "sample_rate",
            format!(
                "{} Hz undersamples a {} Hz mode; need more than 4× the frequency",
                spec.sample_rate, spec.frequency
            ),
        ));
    }
    let c = spec.nonlinear.map_or(0.0, |n| n.shift_coefficient());
    let w0 = 2.0 * PI * spec.frequency;
    let a0 = spec.amplitude;
    let n = (spec.duration * spec.sample_rate).round() as usize;
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid("noise", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let signal = (0..n)
        .map(|k| {
            let t = k as f64 / spec.sample_rate;
            let (a, phase) = if spec.tau.is_finite() {
                let decay = (-t / spec.tau).exp();
                // ∫ A² dt = A0² τ/2 (1 − e^(−2t/τ)), written with expm1 for
                // accuracy when t ≪ τ.
                let integral = -a0 * a0 * spec.tau / 2.0 * (-2.0 * t / spec.tau).exp_m1();
                (a0 * decay, w0 * (t + c * integral))
            } else {
                (a0, w0 * (1.0 + c * a0 * a0) * t)
            };
            let clean = a * phase.cos();
            if spec.noise > 0.0 {
                clean + noise.sample(&mut rng)
            } else {
                clean
            }
        })
        .collect();
    RingdownRecord::new(spec.sample_rate, 0.0, signal)
}
