//! Time- and frequency-domain measurement series and their CSV layouts.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::table::{write_rows, Table};

pub const RAW_RINGDOWN_HEADER: [&str; 2] = ["t_s", "signal"];
pub const ENVELOPE_HEADER: [&str; 3] = ["t_s", "amplitude", "f_hz"];
pub const SPECTRUM_HEADER: [&str; 2] = ["f_hz", "psd"];

/// Uniformly sampled free-decay signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingdownRecord {
    pub sample_rate: f64,
    /// Time of the first sample [s].
    pub start: f64,
    pub signal: Vec<f64>,
}

impl RingdownRecord {
    pub fn new(sample_rate: f64, start: f64, signal: Vec<f64>) -> Result<Self> {
        require_positive("sample_rate", sample_rate)?;
        Ok(Self {
            sample_rate,
            start,
            signal,
        })
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.signal.len() as f64 / self.sample_rate
    }

    pub fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        let rows = self
            .signal
            .iter()
            .enumerate()
            .map(|(k, s)| vec![format!("{}", self.time(k)), format!("{s:e}")]);
        write_rows(w, &RAW_RINGDOWN_HEADER, rows)
    }
}

/// Slowly varying amplitude and frequency of one demodulation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSample {
    /// Window centre [s].
    pub t: f64,
    pub amplitude: f64,
    /// Local oscillation frequency [Hz]; NaN when unknown.
    pub frequency: f64,
}

pub fn write_envelope_csv(w: &mut dyn Write, samples: &[EnvelopeSample]) -> Result<()> {
    let rows = samples
        .iter()
        .map(|s| vec![format!("{}", s.t), format!("{:e}", s.amplitude), format!("{}", s.frequency)]);
    write_rows(w, &ENVELOPE_HEADER, rows)
}

/// A ringdown file holds either raw samples or an already demodulated
/// amplitude, told apart by its columns.
#[derive(Debug, Clone, PartialEq)]
pub enum RingdownData {
    Raw(RingdownRecord),
    Envelope(Vec<EnvelopeSample>),
}

pub fn read_ringdown_csv<R: Read>(reader: R) -> Result<RingdownData> {
    let table = Table::parse(reader)?;
    let t = table.floats("t_s")?;
    if table.has("amplitude") {
        let a = table.floats("amplitude")?;
        let f = if table.has("f_hz") {
            table.floats("f_hz").unwrap_or_else(|_| vec![f64::NAN; a.len()])
        } else {
            vec![f64::NAN; a.len()]
        };
        let samples = t
            .iter()
            .zip(&a)
            .zip(&f)
            .map(|((&t, &amplitude), &frequency)| EnvelopeSample { t, amplitude, frequency })
            .collect();
        return Ok(RingdownData::Envelope(samples));
    }
    if !table.has("signal") {
        return Err(Error::Data(format!(
            "ringdown file needs `t_s` plus `amplitude` or `signal` columns, found {:?}",
            table.headers
        )));
    }
    let s = table.floats("signal")?;
    if t.len() < 2 {
        return Err(Error::Data("raw ringdown needs at least two samples".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Data("column `t_s` must increase".into()));
    }
    if let Some(k) = t.windows(2).position(|w| ((w[1] - w[0]) / dt - 1.0).abs() > 1e-3) {
        return Err(Error::Data(format!("row {}: raw ringdown samples must be uniformly spaced", k + 2)));
    }
    Ok(RingdownData::Raw(RingdownRecord::new(1.0 / dt, t[0], s)?))
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub frequency: Vec<f64>,
    pub psd: Vec<f64>,
}

impl SpectrumRecord {
    pub fn new(frequency: Vec<f64>, psd: Vec<f64>) -> Result<Self> {
        if frequency.len() != psd.len() {
            return Err(Error::Data(format!(
                "{} frequencies but {} PSD values",
                frequency.len(),
                psd.len()
            )));
        }
        if let Some(k) = frequency.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Data(format!("row {}: frequencies must increase", k + 2)));
        }
        Ok(Self { frequency, psd })
    }

    pub fn len(&self) -> usize {
        self.frequency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequency.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        if self.len() < 2 {
            return f64::NAN;
        }
        (self.frequency[self.len() - 1] - self.frequency[0]) / (self.len() - 1) as f64
    }

    /// The bins with lo ≤ f ≤ hi.
    pub fn band(&self, lo: f64, hi: f64) -> Self {
        let (frequency, psd) = self
            .frequency
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(f, p)| (*f, *p))
            .unzip();
        Self { frequency, psd }
    }

    pub fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        let rows = self
            .frequency
            .iter()
            .zip(&self.psd)
            .map(|(f, p)| vec![format!("{f}"), format!("{p:e}")]);
        write_rows(w, &SPECTRUM_HEADER, rows)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let table = Table::parse(reader)?;
        Self::new(table.floats("f_hz")?, table.floats("psd")?)
    }
}
