//! Thermal noise floors and the sensor figures of merit derived from them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Result};
use crate::model::{MagnetParticle, ModeLabel, PhysicalConstants};

/// Thermal torque PSD 4 k_B T I ω0/Q [N²m²/Hz].
pub fn thermal_torque_psd(temperature: f64, inertia: f64, omega0: f64, q: f64, c: &PhysicalConstants) -> Result<f64> {
    require_non_negative("temperature", temperature)?;
    require_positive("inertia", inertia)?;
    require_positive("omega0", omega0)?;
    require_positive("q", q)?;
    Ok(4.0 * c.k_b * temperature * inertia * omega0 / q)
}

/// Thermal force PSD 4 k_B T m ω0/Q [N²/Hz].
pub fn thermal_force_psd(temperature: f64, mass: f64, omega0: f64, q: f64, c: &PhysicalConstants) -> Result<f64> {
    require_non_negative("temperature", temperature)?;
    require_positive("mass", mass)?;
    require_positive("omega0", omega0)?;
    require_positive("q", q)?;
    Ok(4.0 * c.k_b * temperature * mass * omega0 / q)
}

/// Transfers an absolute torque calibration from a spectrum where the
/// thermal torque is known to one where only the peak amplitude is:
/// S_T,low = S_T,high·A1,low/A1,high.
pub fn calibrate_torque(a1_low: f64, a1_high: f64, s_t_high: f64) -> Result<f64> {
    require_non_negative("a1_low", a1_low)?;
    require_positive("a1_high", a1_high)?;
    require_non_negative("s_t_high", s_t_high)?;
    Ok(s_t_high * a1_low / a1_high)
}

/// Quantum limit 2 μ0 ħ/V for a magnetometer of volume V [T²/Hz].
pub fn quantum_limit_field_psd(volume: f64, c: &PhysicalConstants) -> Result<f64> {
    require_positive("volume", volume)?;
    Ok(2.0 * c.mu0 * c.hbar / volume)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeQ {
    pub label: ModeLabel,
    /// [Hz].
    pub frequency: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSensitivity {
    pub label: ModeLabel,
    pub frequency: f64,
    pub q: f64,
    /// Amplitude decay time Q/(π f) [s].
    pub tau: f64,
    /// Force and acceleration PSDs, for translational modes.
    pub s_f: Option<f64>,
    pub s_a: Option<f64>,
    /// Thermal torque PSD, for rotational modes.
    pub s_t: Option<f64>,
    /// [K/s].
    pub t_over_tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TorqueSource {
    Measured,
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub temperature: f64,
    pub modes: Vec<ModeSensitivity>,
    /// Torque PSD used for magnetometry and where it came from.
    pub s_t: Option<f64>,
    pub s_t_source: Option<TorqueSource>,
    /// Equivalent field PSD S_T/μ² [T²/Hz].
    pub s_b: Option<f64>,
    /// Quantum limit with the physical particle volume.
    pub s_b_ql: f64,
}

/// Per-mode thermal floors plus the field sensitivity. A measured torque
/// PSD takes precedence; otherwise the thermal torque of `torque_mode` (the
/// sphere's own inertia) is used, if that mode is listed.
pub fn sensitivity_report(
    particle: &MagnetParticle,
    temperature: f64,
    modes: &[ModeQ],
    measured_torque_psd: Option<f64>,
    torque_mode: ModeLabel,
    c: &PhysicalConstants,
) -> Result<SensitivityReport> {
    require_non_negative("temperature", temperature)?;
    if let Some(s) = measured_torque_psd {
        require_non_negative("measured_torque_psd", s)?;
    }
    let m = particle.mass();
    let mut out = Vec::with_capacity(modes.len());
    for mq in modes {
        require_positive("frequency", mq.frequency)?;
        require_positive("q", mq.q)?;
        let omega = 2.0 * PI * mq.frequency;
        let tau = mq.q / (PI * mq.frequency);
        let (s_f, s_a, s_t) = if mq.label.is_translational() {
            let s_f = thermal_force_psd(temperature, m, omega, mq.q, c)?;
            (Some(s_f), Some(s_f / (m * m)), None)
        } else {
            (None, None, Some(thermal_torque_psd(temperature, particle.inertia(), omega, mq.q, c)?))
        };
        out.push(ModeSensitivity {
            label: mq.label,
            frequency: mq.frequency,
            q: mq.q,
            tau,
            s_f,
            s_a,
            s_t,
            t_over_tau: temperature / tau,
        });
    }
    let (s_t, s_t_source) = match measured_torque_psd {
        Some(s) => (Some(s), Some(TorqueSource::Measured)),
        None => match out.iter().find(|m| m.label == torque_mode).and_then(|m| m.s_t) {
            Some(s) => (Some(s), Some(TorqueSource::Thermal)),
            None => (None, None),
        },
    };
    let mu = particle.dipole();
    Ok(SensitivityReport {
        temperature,
        modes: out,
        s_t,
        s_t_source,
        s_b: s_t.map(|s| s / (mu * mu)),
        s_b_ql: quantum_limit_field_psd(particle.volume(), c)?,
    })
}
