//! Amplitude and frequency extraction from free decays, and the fits made
//! on the resulting envelope.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{EnvelopeSample, RingdownRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemodOptions {
    /// Oscillation periods per window.
    pub window_cycles: f64,
    /// Starting frequency [Hz]; estimated from the spectrum when absent.
    pub frequency_hint: Option<f64>,
}

impl Default for DemodOptions {
    fn default() -> Self {
        Self {
            window_cycles: 20.0,
            frequency_hint: None,
        }
    }
}

/// Strongest spectral line, refined by a parabola through the log
/// magnitudes of the peak bin and its neighbours.
fn dominant_frequency(r: &RingdownRecord) -> Result<f64> {
    let n = r.signal.len().min(1 << 20);
    let n = if n.is_power_of_two() { n } else { n.next_power_of_two() / 2 };
    if n < 16 {
        return Err(Error::Data(format!("{} samples are too few to locate the oscillation", r.signal.len())));
    }
    let mut buf: Vec<Complex<f64>> = r.signal[..n]
        .iter()
        .enumerate()
        .map(|(k, s)| Complex::new(s * (0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos()), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm().max(1e-300).ln()).collect();
    let k = (2..n / 2 - 1).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).expect("n ≥ 16");
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Ok((k as f64 + shift) * r.sample_rate / n as f64)
}

/// Least-squares a·cos + b·sin + c at angular frequency ω over samples
/// with times measured from `centre`; returns (a, b).
fn sinusoid_ls(y: &[f64], t0: f64, dt: f64, centre: f64, omega: f64) -> Option<(f64, f64)> {
    let mut m = Matrix3::zeros();
    let mut v = Vector3::zeros();
    for (k, &s) in y.iter().enumerate() {
        let t = t0 + k as f64 * dt - centre;
        let (sn, cs) = (omega * t).sin_cos();
        let row = Vector3::new(cs, sn, 1.0);
        m += row * row.transpose();
        v += row * s;
    }
    let x = m.lu().solve(&v)?;
    Some((x[0], x[1]))
}

/// Splits the record into windows of a fixed number of periods and fits a
/// sinusoid in each. The local frequency is refined from the phase drift
/// between the two halves of the window.
pub fn demodulate(record: &RingdownRecord, options: &DemodOptions) -> Result<Vec<EnvelopeSample>> {
    if !(options.window_cycles >= 1.0) {
        return Err(Error::invalid("window_cycles", format!("must be ≥ 1, got {}", options.window_cycles)));
    }
    let fs = record.sample_rate;
    let mut f = match options.frequency_hint {
        Some(f) if f > 0.0 && f < fs / 2.0 => f,
        Some(f) => return Err(Error::invalid("frequency_hint", format!("{f} Hz is outside (0, {})", fs / 2.0))),
        None => dominant_frequency(record)?,
    };
    let w = ((options.window_cycles * fs / f).round() as usize).max(8);
    let count = record.signal.len() / w;
    if count < 2 {
        return Err(Error::Data(format!(
            "record of {} samples holds fewer than two {w}-sample windows",
            record.signal.len()
        )));
    }
    let dt = 1.0 / fs;
    let span = w as f64 * dt;
    let half = w / 2;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let y = &record.signal[i * w..(i + 1) * w];
        let t0 = record.time(i * w);
        let centre = t0 + (w - 1) as f64 * dt / 2.0;
        for _ in 0..8 {
            let omega = 2.0 * PI * f;
            let (Some((a1, b1)), Some((a2, b2))) = (
                sinusoid_ls(&y[..half], t0, dt, centre, omega),
                sinusoid_ls(&y[half..], t0 + half as f64 * dt, dt, centre, omega),
            ) else {
                break;
            };
            let p1 = (-b1).atan2(a1);
            let p2 = (-b2).atan2(a2);
            let mut d = p2 - p1;
            d -= 2.0 * PI * (d / (2.0 * PI)).round();
            let df = (d / (PI * span)).clamp(-0.5 / span, 0.5 / span);
            f += df;
            if df.abs() < 1e-9 * f {
                break;
            }
        }
        let (a, b) = sinusoid_ls(y, t0, dt, centre, 2.0 * PI * f)
            .ok_or_else(|| Error::Data(format!("window {} is degenerate", i + 1)))?;
        out.push(EnvelopeSample {
            t: centre,
            amplitude: a.hypot(b),
            frequency: f,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingdownFit {
    /// Amplitude decay time [s]; infinite when no decay is detected.
    pub tau: f64,
    pub tau_se: f64,
    pub rate: f64,
    pub rate_se: f64,
    /// Fitted amplitude at t = 0.
    pub amplitude0: f64,
    pub samples: usize,
    /// Time covered by the samples [s].
    pub span: f64,
    /// Significance |c2|/σ(c2) of a quadratic term in ln A(t).
    pub curvature_sigma: Option<f64>,
    /// Relative change of the decay rate across the record implied by the
    /// quadratic term.
    pub rate_change: Option<f64>,
    /// Set when the quadratic term is significant at 3σ.
    pub nonlinear: bool,
    /// Mean oscillation frequency and Q = π f τ, when frequencies are known.
    pub frequency: Option<f64>,
    pub q: Option<f64>,
    pub warnings: Vec<String>,
}

/// Weighted polynomial least squares in powers of (t − t_mid). Callers pass
/// weights A², the inverse variance of ln A under constant additive noise.
fn weighted_poly(t: &[f64], y: &[f64], w: &[f64], order: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let p = order + 1;
    let n = t.len();
    let t_mid = 0.5 * (t[0] + t[n - 1]);
    let t_scale = ((t[n - 1] - t[0]) / 2.0).max(f64::MIN_POSITIVE);
    let x = nalgebra::DMatrix::from_fn(n, p, |i, j| w[i].sqrt() * ((t[i] - t_mid) / t_scale).powi(j as i32));
    let yv = nalgebra::DVector::from_fn(n, |i, _| w[i].sqrt() * y[i]);
    let xtx = x.transpose() * &x;
    let inv = xtx.clone().try_inverse()?;
    let beta = &inv * x.transpose() * &yv;
    let rss = (&yv - &x * &beta).norm_squared();
    let var = if n > p { rss / (n - p) as f64 } else { f64::NAN };
    let se = (0..p).map(|j| (inv[(j, j)] * var).sqrt() / t_scale.powi(j as i32)).collect();
    let coeff = beta.iter().enumerate().map(|(j, b)| b / t_scale.powi(j as i32)).collect();
    Some((coeff, se))
}

/// Exponential decay fitted to an envelope. Two samples give the exact
/// rate; an amplitude that does not fall yields τ = ∞.
pub fn fit_exponential_ringdown(samples: &[EnvelopeSample]) -> Result<RingdownFit> {
    if samples.len() < 2 {
        return Err(Error::Data(format!("need at least 2 amplitude samples, got {}", samples.len())));
    }
    if let Some(k) = samples.iter().position(|s| !(s.amplitude > 0.0 && s.amplitude.is_finite())) {
        return Err(Error::Data(format!("sample {}: amplitude must be positive", k + 1)));
    }
    if let Some(k) = samples.windows(2).position(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Data(format!("sample {}: times must increase", k + 2)));
    }
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.amplitude.ln()).collect();
    let a_max = samples.iter().fold(0.0f64, |m, s| m.max(s.amplitude));
    let w: Vec<f64> = samples.iter().map(|s| (s.amplitude / a_max).powi(2)).collect();
    let n = samples.len();
    let span = t[n - 1] - t[0];
    let (lin, lin_se) = weighted_poly(&t, &y, &w, 1).ok_or_else(|| Error::Fit {
        message: "singular envelope design".into(),
        trace: vec![],
    })?;
    let rate = -lin[1];
    let rate_se = lin_se[1];
    let t_mid = 0.5 * (t[0] + t[n - 1]);
    let amplitude0 = (lin[0] + rate * t_mid).exp();
    let mut warnings = Vec::new();
    let decays = rate * span > 1e-9;
    let (tau, tau_se) = if decays {
        (1.0 / rate, rate_se / (rate * rate))
    } else {
        warnings.push("amplitude does not decay; τ reported as infinite".to_string());
        (f64::INFINITY, f64::INFINITY)
    };
    if n < 10 {
        warnings.push(format!("only {n} amplitude samples; at least 10 are recommended"));
    }
    if decays && span < 0.5 * tau {
        warnings.push(format!("samples span {:.3}τ; at least 0.5τ is recommended", span / tau));
    }
    let (curvature_sigma, rate_change) = if n >= 4 {
        match weighted_poly(&t, &y, &w, 2) {
            Some((quad, quad_se)) if quad_se[2] > 0.0 => {
                let change = if rate != 0.0 { 2.0 * quad[2] * span / rate } else { f64::NAN };
                (Some(quad[2].abs() / quad_se[2]), Some(-change))
            }
            Some((quad, _)) if quad[2] == 0.0 => (Some(0.0), Some(0.0)),
            _ => (None, None),
        }
    } else {
        (None, None)
    };
    let nonlinear = curvature_sigma.is_some_and(|s| s > 3.0);
    if nonlinear {
        warnings.push("ln A(t) is significantly curved: damping depends on amplitude".to_string());
    }
    let fs: Vec<f64> = samples.iter().map(|s| s.frequency).filter(|f| f.is_finite()).collect();
    let frequency = (!fs.is_empty()).then(|| fs.iter().sum::<f64>() / fs.len() as f64);
    let q = frequency.map(|f| PI * f * tau);
    Ok(RingdownFit {
        tau,
        tau_se,
        rate,
        rate_se,
        amplitude0,
        samples: n,
        span,
        curvature_sigma,
        rate_change,
        nonlinear,
        frequency,
        q,
        warnings,
    })
}

/// f = f0 + slope·A², the signature of a Duffing-like frequency shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyShiftFit {
    pub f0: f64,
    pub f0_se: f64,
    /// [Hz per amplitude²].
    pub slope: f64,
    pub slope_se: f64,
    /// slope/f0, comparable to the predicted shift coefficient.
    pub relative_coefficient: f64,
    pub points: usize,
}

pub fn fit_frequency_vs_amplitude(samples: &[EnvelopeSample]) -> Result<FrequencyShiftFit> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.frequency.is_finite() && s.amplitude.is_finite())
        .map(|s| (s.amplitude * s.amplitude, s.frequency))
        .collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::Data(format!("need at least 3 samples with a frequency, got {n}")));
    }
    let mut m = Matrix2::zeros();
    let mut v = Vector2::zeros();
    for &(x, y) in &pts {
        let row = Vector2::new(1.0, x);
        m += row * row.transpose();
        v += row * y;
    }
    let inv = m.try_inverse().ok_or_else(|| Error::Fit {
        message: "amplitude does not vary; the shift is undetermined".into(),
        trace: vec![],
    })?;
    let beta = inv * v;
    let rss: f64 = pts.iter().map(|&(x, y)| (y - beta[0] - beta[1] * x).powi(2)).sum();
    let var = rss / (n - 2) as f64;
    Ok(FrequencyShiftFit {
        f0: beta[0],
        f0_se: (inv[(0, 0)] * var).sqrt(),
        slope: beta[1],
        slope_se: (inv[(1, 1)] * var).sqrt(),
        relative_coefficient: beta[1] / beta[0],
        points: n,
    })
}
