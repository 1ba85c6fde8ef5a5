//! Damping channels: molecular-regime gas drag, eddy currents and magnetic
//! hysteresis in the particle, plus τ(P) regression.
//!
//! Rates are amplitude decay rates 1/τ, with Q = π f τ.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::model::{Environment, MagnetParticle, ModeLabel, PhysicalConstants, PA_PER_MBAR};
use crate::table::{write_rows, Table};

/// Kinetic diameter of helium [m], used only for the Knudsen number.
pub const HELIUM_DIAMETER: f64 = 2.2e-10;

/// Mean molecular speed √(8 k_B T / (π m_g)).
pub fn mean_thermal_velocity(temperature: f64, gas_mass: f64, c: &PhysicalConstants) -> Result<f64> {
    require_positive("temperature", temperature)?;
    require_positive("gas_mass", gas_mass)?;
    Ok((8.0 * c.k_b * temperature / (PI * gas_mass)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GasDampingKind {
    Translational,
    Rotational,
}

impl GasDampingKind {
    pub fn for_mode(label: ModeLabel) -> Self {
        if label.is_translational() {
            Self::Translational
        } else {
            Self::Rotational
        }
    }

    /// Dimensionless prefactor of P/(ρ R v_th).
    pub fn prefactor(self) -> f64 {
        match self {
            Self::Translational => 0.5 * (1.0 + 8.0 / PI),
            Self::Rotational => 5.0 / PI,
        }
    }
}

/// Free-molecular damping rate of a sphere: linear in pressure and
/// independent of frequency. Validity (Knudsen number ≫ 1) is the caller's
/// concern; see [`knudsen_number`].
pub fn gas_damping(pressure: f64, particle: &MagnetParticle, v_th: f64, kind: GasDampingKind) -> Result<f64> {
    require_non_negative("pressure", pressure)?;
    require_positive("v_th", v_th)?;
    Ok(kind.prefactor() * pressure / (particle.density() * particle.radius() * v_th))
}

/// Mean free path over particle radius for a hard-sphere gas.
pub fn knudsen_number(pressure: f64, temperature: f64, radius: f64, molecule_diameter: f64, c: &PhysicalConstants) -> f64 {
    let mfp = c.k_b * temperature / (2f64.sqrt() * PI * molecule_diameter.powi(2) * pressure);
    mfp / radius
}

/// How the cold-side pressure is derived from the warm gauge reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureModel {
    /// P_c = P_w·√(T_c/T_w).
    LowPressureLimit,
    /// Tabulated (P_w, P_c) pairs [Pa], strictly increasing in both.
    Table(Vec<(f64, f64)>),
}

/// Cold-side pressure. Tables are interpolated linearly, follow
/// P_c = P_w·√(T_c/T_w) near zero pressure and keep the last ratio P_c/P_w
/// beyond the final entry.
pub fn thermomolecular_pressure(env: &Environment, model: &PressureModel) -> Result<f64> {
    env.validate()?;
    let limit = (env.t_cold / env.t_warm).sqrt();
    let pw = env.p_warm;
    match model {
        PressureModel::LowPressureLimit => Ok(pw * limit),
        PressureModel::Table(rows) => {
            if rows.is_empty() {
                return Err(Error::InvalidTable("empty pressure table".into()));
            }
            if rows.iter().any(|&(a, b)| !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite())) {
                return Err(Error::InvalidTable("pressures must be finite and > 0".into()));
            }
            if let Some(k) = rows.windows(2).position(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
                return Err(Error::InvalidTable(format!(
                    "table is not strictly increasing between entries {} and {}",
                    k,
                    k + 1
                )));
            }
            // Knots: the origin, a point on the low-pressure asymptote well
            // below the first entry, then the table itself. Linear pieces
            // through increasing knots keep the map monotone.
            let (p1, c1) = rows[0];
            let p_star = 0.5 * p1.min(c1 / limit);
            let mut knots = vec![(0.0, 0.0), (p_star, limit * p_star)];
            knots.extend_from_slice(rows);
            let (pl, cl) = knots[knots.len() - 1];
            if pw >= pl {
                return Ok(pw * cl / pl);
            }
            let k = knots.partition_point(|n| n.0 <= pw);
            let (a0, b0) = knots[k - 1];
            let (a1, b1) = knots[k];
            Ok(b0 + (b1 - b0) * (pw - a0) / (a1 - a0))
        }
    }
}

/// Eddy-current quality factor of a mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EddyCurrentQ {
    /// Infinite for an insulating particle.
    pub q: f64,
    pub skin_depth: f64,
    /// Field change at the particle per radian of β [T/rad].
    pub delta_b: f64,
    /// False when the skin depth is not much larger than the radius, where
    /// the low-frequency polarizability no longer applies.
    pub low_frequency_valid: bool,
}

/// Skin depth √(2/(σ μ0 ω)).
pub fn skin_depth(sigma: f64, omega: f64, c: &PhysicalConstants) -> f64 {
    (2.0 / (sigma * c.mu0 * omega)).sqrt()
}

/// Imaginary polarizability of a conducting sphere for δ ≫ a: a²/(5δ²).
pub fn eddy_polarizability_imag(radius: f64, skin_depth: f64) -> f64 {
    radius * radius / (5.0 * skin_depth * skin_depth)
}

/// Power dissipated by eddy currents in a field of amplitude `b`
/// oscillating at ω: (π/15) σ ω² a⁵ b².
pub fn eddy_power(sigma: f64, omega: f64, radius: f64, b: f64) -> f64 {
    PI / 15.0 * sigma * omega * omega * radius.powi(5) * b * b
}

/// Q = ωE/W_ec with E = ½ k_β β_A² and ΔB = (μ0/4π)·μ/(2z0)³ per unit β;
/// the amplitude cancels.
pub fn eddy_current_q(particle: &MagnetParticle, omega: f64, z0: f64, k_beta: f64, c: &PhysicalConstants) -> Result<EddyCurrentQ> {
    require_positive("omega", omega)?;
    require_positive("z0", z0)?;
    require_positive("k_beta", k_beta)?;
    let sigma = particle.conductivity();
    let delta_b = c.mu0 / (4.0 * PI) * particle.dipole() / (2.0 * z0).powi(3);
    if sigma == 0.0 {
        return Ok(EddyCurrentQ {
            q: f64::INFINITY,
            skin_depth: f64::INFINITY,
            delta_b,
            low_frequency_valid: true,
        });
    }
    let delta = skin_depth(sigma, omega, c);
    let energy = 0.5 * k_beta;
    let power = eddy_power(sigma, omega, particle.radius(), delta_b);
    Ok(EddyCurrentQ {
        q: omega * energy / power,
        skin_depth: delta,
        delta_b,
        low_frequency_valid: delta > 10.0 * particle.radius(),
    })
}

/// 1/Q_m = χ''·(a/z0)³/24; infinite when χ'' = 0.
pub fn hysteresis_q(particle: &MagnetParticle, z0: f64) -> Result<f64> {
    require_positive("z0", z0)?;
    let inv = particle.chi_imag() * (particle.radius() / z0).powi(3) / 24.0;
    Ok(if inv == 0.0 { f64::INFINITY } else { 1.0 / inv })
}

/// χ'' that produces a given hysteresis Q.
pub fn chi_imag_from_q(q: f64, radius: f64, z0: f64) -> Result<f64> {
    require_positive("q", q)?;
    require_positive("radius", radius)?;
    require_positive("z0", z0)?;
    Ok(24.0 / (q * (radius / z0).powi(3)))
}

/// Q = π f τ.
pub fn q_from_ringdown(frequency: f64, tau: f64) -> Result<f64> {
    require_positive("frequency", frequency)?;
    require_positive("tau", tau)?;
    Ok(PI * frequency * tau)
}

/// Amplitude decay rate π f/Q of a channel with quality factor Q.
pub fn rate_from_q(frequency: f64, q: f64) -> f64 {
    PI * frequency / q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingBudget {
    pub mode: ModeLabel,
    pub frequency: f64,
    pub cold_pressure: f64,
    pub gas_translational: f64,
    pub gas_rotational: f64,
    pub eddy: f64,
    pub hysteresis: f64,
    pub residual_other: f64,
    pub total: f64,
    pub tau: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetInput {
    pub mode: ModeLabel,
    /// Mode frequency [Hz].
    pub frequency: f64,
    pub z0: f64,
    pub k_beta: f64,
    /// Additional rate from unmodelled channels [1/s].
    pub residual: f64,
    pub pressure_model: PressureModel,
}

/// Sum of all channel rates. Eddy and hysteresis losses use the β-mode
/// coupling of the particle to its image at the mode's own frequency.
pub fn damping_budget(particle: &MagnetParticle, env: &Environment, input: &BudgetInput, c: &PhysicalConstants) -> Result<DampingBudget> {
    require_positive("frequency", input.frequency)?;
    require_non_negative("residual", input.residual)?;
    let pc = thermomolecular_pressure(env, &input.pressure_model)?;
    let v_th = mean_thermal_velocity(env.t_cold, env.gas_mass, c)?;
    let kind = GasDampingKind::for_mode(input.mode);
    let gas = gas_damping(pc, particle, v_th, kind)?;
    let (gas_translational, gas_rotational) = match kind {
        GasDampingKind::Translational => (gas, 0.0),
        GasDampingKind::Rotational => (0.0, gas),
    };
    let omega = 2.0 * PI * input.frequency;
    let eddy = rate_from_q(input.frequency, eddy_current_q(particle, omega, input.z0, input.k_beta, c)?.q);
    let hysteresis = rate_from_q(input.frequency, hysteresis_q(particle, input.z0)?);
    let channels = [gas_translational, gas_rotational, eddy, hysteresis, input.residual];
    let total: f64 = channels.iter().sum();
    let tau = 1.0 / total;
    Ok(DampingBudget {
        mode: input.mode,
        frequency: input.frequency,
        cold_pressure: pc,
        gas_translational,
        gas_rotational,
        eddy,
        hysteresis,
        residual_other: input.residual,
        total,
        tau,
        q: PI * input.frequency * tau,
    })
}

pub const BUDGET_HEADER: [&str; 12] = [
    "P_warm_mbar", "P_cold_mbar", "mode", "f_hz", "gas_translational_per_s", "gas_rotational_per_s", "eddy_per_s",
    "hysteresis_per_s", "residual_per_s", "total_per_s", "tau_s", "q",
];

/// Budgets at each warm-gauge pressure [Pa], in the given order.
pub fn pressure_sweep(
    particle: &MagnetParticle,
    env: &Environment,
    input: &BudgetInput,
    warm_pressures: &[f64],
    c: &PhysicalConstants,
) -> Result<Vec<(f64, DampingBudget)>> {
    warm_pressures
        .iter()
        .map(|&p_warm| Ok((p_warm, damping_budget(particle, &Environment { p_warm, ..*env }, input, c)?)))
        .collect()
}

pub fn write_budget_csv(w: &mut dyn Write, rows: &[(f64, DampingBudget)]) -> Result<()> {
    let rows = rows.iter().map(|(pw, b)| {
        let mut r = vec![format!("{:e}", pw / PA_PER_MBAR), format!("{:e}", b.cold_pressure / PA_PER_MBAR), b.mode.to_string()];
        r.extend(
            [
                b.frequency,
                b.gas_translational,
                b.gas_rotational,
                b.eddy,
                b.hysteresis,
                b.residual_other,
                b.total,
                b.tau,
                b.q,
            ]
            .iter()
            .map(|v| format!("{v:e}")),
        );
        r
    });
    write_rows(w, &BUDGET_HEADER, rows)
}

/// Least-squares polynomial in pressure with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFit {
    pub order: usize,
    /// Intercept, linear and (for order 2) quadratic coefficient.
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Weighted residual sum of squares of this fit.
    pub rss: f64,
    /// Residual sums of squares of the order-1 and order-2 fits of the
    /// same data, when each is determined.
    pub rss_linear: Option<f64>,
    pub rss_quadratic: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingPoint {
    pub pressure: f64,
    pub rate: f64,
    /// One-sigma uncertainty of the rate; `None` weighs all points equally.
    pub sigma: Option<f64>,
}

fn polyfit(points: &[DampingPoint], order: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let p = order + 1;
    let n = points.len();
    if n < p {
        return Err(Error::Fit {
            message: format!("order {order} needs at least {p} points, got {n}"),
            trace: vec![],
        });
    }
    let w: Vec<f64> = points.iter().map(|d| d.sigma.map_or(1.0, |s| 1.0 / s)).collect();
    let x = DMatrix::from_fn(n, p, |i, j| w[i] * points[i].pressure.powi(j as i32));
    let y = DVector::from_iterator(n, points.iter().zip(&w).map(|(d, w)| w * d.rate));
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::Fit {
            message: format!("design matrix is rank deficient (singular values {:?})", svd.singular_values.as_slice()),
            trace: vec![],
        });
    }
    let beta = svd.solve(&y, 0.0).map_err(|e| Error::Fit {
        message: e.to_string(),
        trace: vec![],
    })?;
    let rss = (&y - &x * &beta).norm_squared();
    // Covariance (XᵀX)⁻¹ = V Σ⁻² Vᵀ, scaled by the residual variance.
    let v_t = svd.v_t.as_ref().expect("V requested");
    let dof = n - p;
    let scale = if dof > 0 { rss / dof as f64 } else { f64::NAN };
    let se = (0..p)
        .map(|j| {
            let var: f64 = (0..p).map(|k| (v_t[(k, j)] / svd.singular_values[k]).powi(2)).sum();
            (var * scale).sqrt()
        })
        .collect();
    Ok((beta.iter().copied().collect(), se, rss))
}

/// Fits 1/τ = c0 + c1·P (+ c2·P²). With per-point sigmas the fit is
/// weighted and the covariance is rescaled by the reduced χ².
pub fn fit_damping_vs_pressure(points: &[DampingPoint], order: usize) -> Result<PolynomialFit> {
    if !(order == 1 || order == 2) {
        return Err(Error::invalid("order", format!("must be 1 or 2, got {order}")));
    }
    for (i, d) in points.iter().enumerate() {
        if !(d.pressure >= 0.0 && d.pressure.is_finite() && d.rate.is_finite()) {
            return Err(Error::Data(format!("point {}: pressure must be ≥ 0 and values finite", i + 1)));
        }
        if let Some(s) = d.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Data(format!("point {}: sigma must be > 0", i + 1)));
            }
        }
    }
    let (coefficients, standard_errors, rss) = polyfit(points, order)?;
    let rss_linear = polyfit(points, 1).ok().map(|r| r.2);
    let rss_quadratic = polyfit(points, 2).ok().map(|r| r.2);
    Ok(PolynomialFit {
        order,
        coefficients,
        standard_errors,
        rss,
        rss_linear,
        rss_quadratic,
        points: points.len(),
    })
}

/// Required columns of a τ(P) file. `side` (warm|cold, default cold) and
/// `sigma_per_s` are optional.
pub const DAMPING_HEADER: [&str; 3] = ["P_mbar", "inv_tau_per_s", "mode_label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureSide {
    Warm,
    Cold,
}

/// One measured decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingRecord {
    /// [Pa], on the side given by `side`.
    pub pressure: f64,
    pub side: PressureSide,
    pub rate: f64,
    pub sigma: Option<f64>,
    pub mode: ModeLabel,
}

pub fn read_damping_csv<R: Read>(reader: R) -> Result<Vec<DampingRecord>> {
    let table = Table::parse(reader)?;
    let p = table.floats("P_mbar")?;
    let rate = table.floats("inv_tau_per_s")?;
    let modes = table.strings("mode_label")?;
    let sides = if table.has("side") { Some(table.strings("side")?) } else { None };
    let sigma = if table.has("sigma_per_s") { Some(table.floats("sigma_per_s")?) } else { None };
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let row = i + 1;
        let mode = modes[i]
            .parse::<ModeLabel>()
            .map_err(|_| Error::Data(format!("row {row}: column `mode_label` has unknown label `{}`", modes[i])))?;
        let side = match sides.as_ref().map(|s| s[i].to_ascii_lowercase()) {
            None => PressureSide::Cold,
            Some(s) if s == "cold" || s.is_empty() => PressureSide::Cold,
            Some(s) if s == "warm" => PressureSide::Warm,
            Some(s) => return Err(Error::Data(format!("row {row}: column `side` must be warm or cold, got `{s}`"))),
        };
        if p[i] < 0.0 {
            return Err(Error::Data(format!("row {row}: column `P_mbar` is negative")));
        }
        out.push(DampingRecord {
            pressure: p[i] * PA_PER_MBAR,
            side,
            rate: rate[i],
            sigma: sigma.as_ref().map(|s| s[i]),
            mode,
        });
    }
    Ok(out)
}

/// Selects one mode and converts warm readings to cold-side pressure.
pub fn damping_points(records: &[DampingRecord], mode: ModeLabel, env: &Environment, model: &PressureModel) -> Result<Vec<DampingPoint>> {
    records
        .iter()
        .filter(|r| r.mode == mode)
        .map(|r| {
            let pressure = match r.side {
                PressureSide::Cold => r.pressure,
                PressureSide::Warm => thermomolecular_pressure(&Environment { p_warm: r.pressure, ..*env }, model)?,
            };
            Ok(DampingPoint {
                pressure,
                rate: r.rate,
                sigma: r.sigma,
            })
        })
        .collect()
}
