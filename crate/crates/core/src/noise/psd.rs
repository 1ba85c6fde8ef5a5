//! Welch spectra and synthetic thermally driven oscillators.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::records::{RingdownRecord, SpectrumRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchOptions {
    /// Samples per segment; a power of two.
    pub segment: usize,
    /// Fractional overlap of consecutive segments, in [0, 1).
    pub overlap: f64,
}

impl Default for WelchOptions {
    fn default() -> Self {
        Self {
            segment: 4096,
            overlap: 0.5,
        }
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos()).collect()
}

/// One-sided PSD averaged over Hann-windowed segments, normalized so that
/// Σ PSD·Δf equals the mean square of the series. Segment means are
/// removed, so a constant offset does not leak into the lowest bins.
pub fn estimate_psd(series: &RingdownRecord, options: &WelchOptions) -> Result<SpectrumRecord> {
    let n = options.segment;
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::invalid("segment", format!("must be a power of two ≥ 2, got {n}")));
    }
    if n > series.signal.len() {
        return Err(Error::invalid(
            "segment",
            format!("{n} samples exceeds the series length {}", series.signal.len()),
        ));
    }
    if !(0.0..1.0).contains(&options.overlap) {
        return Err(Error::invalid("overlap", format!("must lie in [0, 1), got {}", options.overlap)));
    }
    let step = ((n as f64 * (1.0 - options.overlap)).round() as usize).max(1);
    let window = hann(n);
    let power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let bins = n / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut segments = 0usize;
    let mut start = 0;
    while start + n <= series.signal.len() {
        let seg = &series.signal[start..start + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((b, s), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((s - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let fs = series.sample_rate;
    let scale = 1.0 / (fs * power * segments as f64);
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let frequency = (0..bins).map(|k| k as f64 * fs / n as f64).collect();
    SpectrumRecord::new(frequency, psd)
}

/// Σ PSD·Δf over the spectrum.
pub fn integrated_power(spectrum: &SpectrumRecord) -> f64 {
    spectrum.psd.iter().sum::<f64>() * spectrum.resolution()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessSpec {
    pub frequency: f64,
    pub q: f64,
    /// Peak amplitude A1 of the resulting one-sided displacement PSD.
    pub a1: f64,
    /// One-sided white measurement noise A0 added to the output.
    pub a0: f64,
    pub sample_rate: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Displacement of an oscillator driven by white force noise, sampled with
/// the exact discrete-time transition and noise covariance, so the PSD is
/// A0 + A1·f0⁴/((f² − f0²)² + (f·f0/Q)²) up to aliasing.
pub fn synthesize_thermal_process(spec: &ProcessSpec) -> Result<RingdownRecord> {
    require_positive("frequency", spec.frequency)?;
    require_positive("q", spec.q)?;
    require_non_negative("a1", spec.a1)?;
    require_non_negative("a0", spec.a0)?;
    require_positive("sample_rate", spec.sample_rate)?;
    let w0 = 2.0 * PI * spec.frequency;
    let gamma = w0 / spec.q;
    let dt = 1.0 / spec.sample_rate;
    // Force PSD D (two-sided, angular) with A1 = 2D/ω0⁴.
    let d = spec.a1 * w0.powi(4) / 2.0;
    let var_x = d / (2.0 * gamma * w0 * w0);
    let p_inf = Matrix2::new(var_x, 0.0, 0.0, var_x * w0 * w0);
    let a = Matrix2::new(0.0, 1.0, -w0 * w0, -gamma);
    let phi = (a * dt).exp();
    let cov = p_inf - phi * p_inf * phi.transpose();
    // The covariance is PSD but can be numerically singular for tiny dt·γ.
    let l = nalgebra::Cholesky::new(cov)
        .map(|c| c.l())
        .unwrap_or_else(|| Matrix2::new(cov[(0, 0)].max(0.0).sqrt(), 0.0, 0.0, cov[(1, 1)].max(0.0).sqrt()));
    let sigma_meas = (spec.a0 * spec.sample_rate / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut state = nalgebra::Vector2::new(var_x.sqrt() * normal(), (var_x * w0 * w0).sqrt() * normal());
    let mut signal = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        signal.push(state[0] + sigma_meas * normal());
        let kick = l * nalgebra::Vector2::new(normal(), normal());
        state = phi * state + kick;
    }
    RingdownRecord::new(spec.sample_rate, 0.0, signal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    #[test]
    fn sinusoid_power_is_half_amplitude_squared() {
        let fs = 1000.0;
        let amp = 2.5;
        let signal = (0..1 << 16).map(|k| amp * (2.0 * PI * 37.3 * k as f64 / fs).sin()).collect();
        let r = RingdownRecord::new(fs, 0.0, signal).unwrap();
        let s = estimate_psd(&r, &WelchOptions::default()).unwrap();
        let p = integrated_power(&s);
        assert!((p / (amp * amp / 2.0) - 1.0).abs() < 0.02, "{p}");
    }

    #[test]
    fn white_noise_is_flat() {
        let fs = 512.0;
        let sigma = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nd = Normal::new(0.0, sigma).unwrap();
        let signal = (0..256 * 201).map(|_| nd.sample(&mut rng)).collect();
        let r = RingdownRecord::new(fs, 0.0, signal).unwrap();
        let s = estimate_psd(&r, &WelchOptions { segment: 256, overlap: 0.0 }).unwrap();
        let level = sigma * sigma / (fs / 2.0);
        for p in &s.psd[1..s.len() - 1] {
            assert!((p / level - 1.0).abs() < 0.3, "{p} vs {level}");
        }
        let mean = s.psd[1..s.len() - 1].iter().sum::<f64>() / (s.len() - 2) as f64;
        assert!((mean / level - 1.0).abs() < 0.05);
    }

    #[test]
    fn bad_segments_are_rejected() {
        let r = RingdownRecord::new(10.0, 0.0, vec![0.0; 100]).unwrap();
        assert!(estimate_psd(&r, &WelchOptions { segment: 100, overlap: 0.5 }).is_err());
        assert!(estimate_psd(&r, &WelchOptions { segment: 128, overlap: 0.5 }).is_err());
        assert!(estimate_psd(&r, &WelchOptions { segment: 64, overlap: 1.0 }).is_err());
    }

    #[test]
    fn process_variance_matches_lorentzian_area() {
        let spec = ProcessSpec {
            frequency: 20.0,
            q: 30.0,
            a1: 1e-6,
            a0: 0.0,
            sample_rate: 400.0,
            samples: 400_000,
            seed: 11,
        };
        let r = synthesize_thermal_process(&spec).unwrap();
        let var = r.signal.iter().map(|x| x * x).sum::<f64>() / r.signal.len() as f64;
        // ∫ A1 f0⁴/((f²−f0²)² + (f f0/Q)²) df = A1·f0·Q·π/2.
        let expect = spec.a1 * spec.frequency * spec.q * PI / 2.0;
        assert!((var / expect - 1.0).abs() < 0.05, "{var} vs {expect}");
    }
}
