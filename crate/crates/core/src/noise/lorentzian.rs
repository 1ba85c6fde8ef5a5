//! Damped-oscillator peak model and its least-squares fit.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::SpectrumRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianParams {
    pub a0: f64,
    pub a1: f64,
    pub f0: f64,
    pub q: f64,
}

/// A0 + A1·f0⁴/((f² − f0²)² + (f·f0/Q)²).
pub fn lorentzian_model(f: f64, p: &LorentzianParams) -> f64 {
    p.a0 + p.a1 * peak_shape(f, p.f0, p.q)
}

fn peak_shape(f: f64, f0: f64, q: f64) -> f64 {
    let d = (f * f - f0 * f0).powi(2) + (f * f0 / q).powi(2);
    f0.powi(4) / d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianErrors {
    pub a0: f64,
    pub a1: f64,
    pub f0: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub params: LorentzianParams,
    pub standard_errors: LorentzianErrors,
    pub excluded_bins: usize,
    pub band: Option<(f64, f64)>,
    pub bins_used: usize,
    pub residuals: Residuals,
    /// Sum of squared residuals.
    pub rss: f64,
    pub residual_rms: f64,
    pub iterations: usize,
    /// A1 from the same fit with no bins excluded.
    pub a1_without_exclusion: Option<f64>,
    /// Whether excluding bins moved A1 by more than its standard error.
    pub exclusion_significant: Option<bool>,
}

/// How data and model are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Residuals {
    /// ln(data) − ln(model): equal weight per bin, matching the
    /// multiplicative scatter of averaged periodograms.
    #[default]
    Log,
    /// data − model, relative to the median PSD in the band. Peak bins
    /// dominate, so leakage biases this fit far more than the log fit.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianOptions {
    pub exclude_bins: usize,
    pub residuals: Residuals,
    pub band: Option<(f64, f64)>,
    pub initial: Option<LorentzianParams>,
    pub max_iterations: usize,
}

impl Default for LorentzianOptions {
    fn default() -> Self {
        Self {
            exclude_bins: 9,
            residuals: Residuals::Log,
            band: None,
            initial: None,
            max_iterations: 500,
        }
    }
}

/// Ceiling on fitted Q, reached only when the data do not constrain it.
pub const MAX_Q: f64 = 1e12;

struct Bins {
    f: Vec<f64>,
    y: Vec<f64>,
    residuals: Residuals,
    /// Normalization of linear residuals.
    scale: f64,
}

/// Peak from the largest bin, background from the median, Q from the
/// half-power width (at least one bin wide).
fn initial_guess(s: &SpectrumRecord) -> LorentzianParams {
    let (k, &peak) = s
        .psd
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let mut sorted = s.psd.clone();
    sorted.sort_by(f64::total_cmp);
    let a0 = sorted[sorted.len() / 2];
    let half = 0.5 * (peak + a0);
    let lo = (0..k).rev().find(|&i| s.psd[i] < half).unwrap_or(0);
    let hi = (k..s.len()).find(|&i| s.psd[i] < half).unwrap_or(s.len() - 1);
    let f0 = s.frequency[k];
    let width = (s.frequency[hi] - s.frequency[lo]).max(s.resolution());
    let q = (f0 / width).max(0.5);
    LorentzianParams {
        a0,
        a1: ((peak - a0) / (q * q)).max(peak * 1e-12 / (q * q)),
        f0,
        q,
    }
}

fn residuals_and_jacobian(b: &Bins, x: &Vector4<f64>) -> (Vec<f64>, Vec<[f64; 4]>) {
    let (a0, a1, f0, q) = (x[0], x[1], x[2], x[3].exp());
    let mut r = Vec::with_capacity(b.f.len());
    let mut j = Vec::with_capacity(b.f.len());
    for (&f, &y) in b.f.iter().zip(&b.y) {
        let d = (f * f - f0 * f0).powi(2) + (f * f0 / q).powi(2);
        let l = f0.powi(4) / d;
        let m = a0 + a1 * l;
        let dd_df0 = -4.0 * f0 * (f * f - f0 * f0) + 2.0 * f * f * f0 / (q * q);
        let dl_df0 = 4.0 * f0.powi(3) / d - l / d * dd_df0;
        let dl_dlnq = l / d * 2.0 * (f * f0 / q).powi(2);
        let (res, w) = match b.residuals {
            Residuals::Log => (y.ln() - m.ln(), 1.0 / m),
            Residuals::Linear => ((y - m) / b.scale, 1.0 / b.scale),
        };
        r.push(res);
        j.push([-w, -l * w, -a1 * dl_df0 * w, -a1 * dl_dlnq * w]);
    }
    (r, j)
}

fn normal_equations(r: &[f64], j: &[[f64; 4]]) -> (Matrix4<f64>, Vector4<f64>, f64) {
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    for (ri, ji) in r.iter().zip(j) {
        for a in 0..4 {
            jtr[a] += ji[a] * ri;
            for c in 0..4 {
                jtj[(a, c)] += ji[a] * ji[c];
            }
        }
    }
    (jtj, jtr, r.iter().map(|v| v * v).sum())
}

fn feasible(x: &Vector4<f64>) -> bool {
    x[0] > 0.0 && x[1] >= 0.0 && x[2] > 0.0 && x[3].is_finite()
}

fn levenberg_marquardt(b: &Bins, start: LorentzianParams, max_iterations: usize) -> Result<(Vector4<f64>, Matrix4<f64>, f64, usize)> {
    let mut x = Vector4::new(start.a0, start.a1, start.f0, start.q.ln());
    let (mut r, mut j) = residuals_and_jacobian(b, &x);
    let (mut jtj, mut jtr, mut rss) = normal_equations(&r, &j);
    let mut lambda = 1e-3;
    let mut trace = vec![rss];
    let ln_q_max = MAX_Q.ln();
    for it in 1..=max_iterations {
        // Parameters sitting on a bound with the descent direction pointing
        // out of the feasible set are held there for this iteration.
        let pinned = [false, x[1] <= 0.0 && jtr[1] > 0.0, false, x[3] >= ln_q_max && jtr[3] < 0.0];
        let free = |k: usize| !pinned[k] && jtj[(k, k)] > 0.0;
        let flat = (0..4).all(|k| !free(k) || jtr[k].abs() <= 1e-8 * (jtj[(k, k)] * rss).sqrt());
        if flat {
            return Ok((x, jtj, rss, it));
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj;
            let mut g = -jtr;
            for k in 0..4 {
                if free(k) {
                    a[(k, k)] += lambda * jtj[(k, k)];
                } else {
                    // No leverage (f0 and Q when A1 = 0) or pinned: frozen.
                    for c in 0..4 {
                        a[(k, c)] = 0.0;
                        a[(c, k)] = 0.0;
                    }
                    a[(k, k)] = 1.0;
                    g[k] = 0.0;
                }
            }
            let Some(step) = a.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = x + step;
            // Keep the background positive and the peak non-negative.
            trial[0] = trial[0].max(x[0] * 1e-3);
            trial[1] = trial[1].max(0.0);
            // Wings alone do not bound Q; stop it at an unmistakable value.
            trial[3] = trial[3].min(ln_q_max);
            if !feasible(&trial) {
                lambda *= 10.0;
                continue;
            }
            let (rt, jt) = residuals_and_jacobian(b, &trial);
            let rss_t: f64 = rt.iter().map(|v| v * v).sum();
            if rss_t.is_finite() && rss_t <= rss {
                let scale = [x[0].abs(), x[1].abs(), x[2].abs(), 1.0];
                let small_step = (0..4).all(|k| step[k].abs() <= 1e-10 * scale[k]);
                let gain = rss - rss_t;
                x = trial;
                r = rt;
                j = jt;
                (jtj, jtr, rss) = normal_equations(&r, &j);
                lambda = (lambda / 3.0).max(1e-12);
                trace.push(rss);
                accepted = true;
                if gain <= 1e-12 * rss || small_step {
                    return Ok((x, jtj, rss, it));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: a minimum to working precision.
            return Ok((x, jtj, rss, it));
        }
    }
    let tail = trace.len().saturating_sub(32);
    Err(Error::Fit {
        message: format!("Lorentzian fit did not converge in {max_iterations} iterations"),
        trace: trace[tail..].to_vec(),
    })
}

fn select_bins(s: &SpectrumRecord, exclude: usize, residuals: Residuals) -> Bins {
    let (k, _) = s
        .psd
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let lo = k.saturating_sub(exclude / 2);
    let hi = lo + exclude;
    let mut sorted = s.psd.clone();
    sorted.sort_by(f64::total_cmp);
    let mut bins = Bins {
        f: vec![],
        y: vec![],
        residuals,
        scale: sorted[sorted.len() / 2],
    };
    for i in (0..s.len()).filter(|i| !(lo..hi).contains(i)) {
        bins.f.push(s.frequency[i]);
        bins.y.push(s.psd[i]);
    }
    bins
}

/// (JᵀJ)⁻¹, treating Q as fixed when it has no leverage or sits at
/// [`MAX_Q`] (a peak narrower than the excluded window); its variance is
/// then infinite.
fn covariance(jtj: &Matrix4<f64>, q_at_cap: bool) -> Matrix4<f64> {
    let d = jtj.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    let dm = Matrix4::from_diagonal(&d);
    let norm = dm * jtj * dm;
    let min_eig = norm.symmetric_eigenvalues().min();
    if min_eig > 1e-12 && !q_at_cap {
        if let Some(inv) = norm.try_inverse() {
            return dm * inv * dm;
        }
    }
    let mut out = Matrix4::from_element(0.0);
    out[(3, 3)] = f64::INFINITY;
    let block = norm.fixed_view::<3, 3>(0, 0).into_owned();
    match block.try_inverse() {
        Some(inv) => {
            for a in 0..3 {
                for b in 0..3 {
                    out[(a, b)] = d[a] * inv[(a, b)] * d[b];
                }
            }
        }
        None => out.fill(f64::INFINITY),
    }
    out
}

fn fit_once(s: &SpectrumRecord, start: LorentzianParams, exclude: usize, o: &LorentzianOptions) -> Result<(LorentzianParams, LorentzianErrors, f64, usize, usize)> {
    let bins = select_bins(s, exclude, o.residuals);
    let n = bins.f.len();
    if n <= 4 {
        return Err(Error::Data(format!("only {n} bins remain after exclusion; need more than 4")));
    }
    let (x, jtj, rss, iterations) = levenberg_marquardt(&bins, start, o.max_iterations)?;
    let q = x[3].exp();
    let var = rss / (n - 4) as f64;
    let cov = covariance(&jtj, x[3] >= MAX_Q.ln() - 1e-9);
    let se = |k: usize| (cov[(k, k)] * var).abs().sqrt();
    Ok((
        LorentzianParams {
            a0: x[0],
            a1: x[1],
            f0: x[2],
            q,
        },
        LorentzianErrors {
            a0: se(0),
            a1: se(1),
            f0: se(2),
            q: q * se(3),
        },
        rss,
        iterations,
        n,
    ))
}

/// Fits the peak model to a spectrum, leaving out `exclude_bins` bins
/// centred on the largest one, whose values are dominated by leakage when
/// the line is narrower than a bin.
pub fn fit_lorentzian(spectrum: &SpectrumRecord, options: &LorentzianOptions) -> Result<LorentzianFit> {
    let s = match options.band {
        Some((lo, hi)) => {
            if !(hi > lo) {
                return Err(Error::invalid("band", format!("need f_lo < f_hi, got {lo}..{hi}")));
            }
            spectrum.band(lo, hi)
        }
        None => spectrum.clone(),
    };
    // The DC bin carries the removed segment means and is never fitted.
    let s = if s.frequency.first() == Some(&0.0) {
        SpectrumRecord::new(s.frequency[1..].to_vec(), s.psd[1..].to_vec())?
    } else {
        s
    };
    if s.len() < 5 + options.exclude_bins {
        return Err(Error::Data(format!(
            "{} bins in band; need at least {} with {} excluded",
            s.len(),
            5 + options.exclude_bins,
            options.exclude_bins
        )));
    }
    if let Some(k) = s.psd.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::Data(format!("PSD at {} Hz is not positive", s.frequency[k])));
    }
    let start = options.initial.unwrap_or_else(|| initial_guess(&s));
    let span = s.frequency[s.len() - 1] - s.frequency[0];
    let half_width = start.f0 / (2.0 * start.q);
    if span < 10.0 * half_width {
        return Err(Error::invalid(
            "band",
            format!("spans {span} Hz, less than 10 half-widths of the peak ({half_width} Hz each)"),
        ));
    }
    let (params, standard_errors, rss, iterations, bins_used) = fit_once(&s, start, options.exclude_bins, options)?;
    let (a1_without_exclusion, exclusion_significant) = if options.exclude_bins > 0 {
        let (full, ..) = fit_once(&s, start, 0, options)?;
        (Some(full.a1), Some((full.a1 - params.a1).abs() > standard_errors.a1))
    } else {
        (None, None)
    };
    Ok(LorentzianFit {
        params,
        standard_errors,
        excluded_bins: options.exclude_bins,
        band: options.band,
        bins_used,
        residuals: options.residuals,
        rss,
        residual_rms: (rss / bins_used as f64).sqrt(),
        iterations,
        a1_without_exclusion,
        exclusion_significant,
    })
}
