//! Amplitude-dependent frequency of a single mode obeying
//! ẍ + ω0²x + α2x² + α3x³ = 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::PlaneEquilibrium;

/// Relative shifts beyond this are outside the perturbative range.
pub const PERTURBATIVE_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearMode {
    Z,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearCoefficients {
    pub mode: NonlinearMode,
    /// Quadratic coefficient [1/(m·s²)] for z; zero for β.
    pub alpha2: f64,
    /// Cubic coefficient [1/(m²·s²)] for z, [1/s²] for β.
    pub alpha3: f64,
    pub omega0: f64,
    /// Natural amplitude scale: z0 for z, 1 rad for β.
    pub scale: f64,
}

impl NonlinearCoefficients {
    /// Coefficients for an arbitrary single-mode oscillator.
    pub fn custom(omega0: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::invalid("omega0", format!("must be > 0, got {omega0}")));
        }
        if !(alpha2.is_finite() && alpha3.is_finite()) {
            return Err(Error::invalid("alpha", "coefficients must be finite"));
        }
        Ok(Self {
            mode: NonlinearMode::Z,
            alpha2,
            alpha3,
            omega0,
            scale: 1.0,
        })
    }

    /// Relative shift per squared amplitude:
    /// 3α3/(8ω0²) − 5α2²/(12ω0⁴).
    pub fn shift_coefficient(&self) -> f64 {
        let w2 = self.omega0 * self.omega0;
        3.0 * self.alpha3 / (8.0 * w2) - 5.0 * self.alpha2 * self.alpha2 / (12.0 * w2 * w2)
    }
}

/// Taylor coefficients of the image potential about (z0, 0).
pub fn nonlinear_coefficients(mode: NonlinearMode, eq: &PlaneEquilibrium) -> Result<NonlinearCoefficients> {
    if !(eq.z0 > 0.0 && eq.omega_z > 0.0 && eq.omega_beta > 0.0) {
        return Err(Error::invalid("plane_equilibrium", "z0 and both frequencies must be > 0"));
    }
    Ok(match mode {
        // U = C(1 + sin²β)/z³ + mgz, with k_z = 12C/z0⁵ = mω_z²:
        // U''' = −60C/z0⁶, U'''' = 360C/z0⁷.
        NonlinearMode::Z => {
            let w2 = eq.omega_z * eq.omega_z;
            NonlinearCoefficients {
                mode,
                alpha2: -2.5 * w2 / eq.z0,
                alpha3: 5.0 * w2 / (eq.z0 * eq.z0),
                omega0: eq.omega_z,
                scale: eq.z0,
            }
        }
        // sin²β = β² − β⁴/3 + …
        NonlinearMode::Beta => NonlinearCoefficients {
            mode,
            alpha2: 0.0,
            alpha3: -2.0 / 3.0 * eq.omega_beta * eq.omega_beta,
            omega0: eq.omega_beta,
            scale: 1.0,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyShift {
    pub omega: f64,
    pub relative: f64,
    /// False when |relative| exceeds [`PERTURBATIVE_LIMIT`]; the value is
    /// still returned.
    pub perturbative: bool,
}

pub fn frequency_shift(c: &NonlinearCoefficients, amplitude: f64) -> Result<FrequencyShift> {
    if !amplitude.is_finite() {
        return Err(Error::invalid("amplitude", "must be finite"));
    }
    let relative = c.shift_coefficient() * amplitude * amplitude;
    Ok(FrequencyShift {
        omega: c.omega0 * (1.0 + relative),
        relative,
        perturbative: relative.abs() < PERTURBATIVE_LIMIT,
    })
}

// Yoshida's sixth-order composition (solution A).
const YOSHIDA6: [f64; 4] = [
    0.784_513_610_477_557_3,
    0.235_573_213_359_357_5,
    -1.177_679_984_178_871,
    1.315_186_320_683_906,
];

fn yoshida6_weights() -> [f64; 7] {
    let w = YOSHIDA6;
    [w[0], w[1], w[2], w[3], w[2], w[1], w[0]]
}

struct Trajectory {
    t: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
    drift: f64,
}

fn integrate(c: &NonlinearCoefficients, x0: f64, periods: f64, steps_per_period: usize) -> Trajectory {
    let w2 = c.omega0 * c.omega0;
    let force = |x: f64| -w2 * x - c.alpha2 * x * x - c.alpha3 * x * x * x;
    let energy =
        |x: f64, v: f64| 0.5 * v * v + 0.5 * w2 * x * x + c.alpha2 * x * x * x / 3.0 + 0.25 * c.alpha3 * x.powi(4);
    let period = 2.0 * std::f64::consts::PI / c.omega0;
    let dt = period / steps_per_period as f64;
    let n = (periods * steps_per_period as f64).ceil() as usize;
    let ws = yoshida6_weights();
    let (mut x, mut v) = (x0, 0.0);
    let e0 = energy(x, v);
    let scale = (0.5 * w2 * x0 * x0).max(f64::MIN_POSITIVE);
    let mut drift: f64 = 0.0;
    let mut out = Trajectory {
        t: Vec::with_capacity(n + 1),
        x: Vec::with_capacity(n + 1),
        v: Vec::with_capacity(n + 1),
        drift: 0.0,
    };
    out.t.push(0.0);
    out.x.push(x);
    out.v.push(v);
    for k in 1..=n {
        // Each stage is a second-order leapfrog (drift-kick-drift).
        for w in ws {
            let h = w * dt;
            x += 0.5 * h * v;
            v += h * force(x);
            x += 0.5 * h * v;
        }
        drift = drift.max((energy(x, v) - e0).abs() / scale);
        out.t.push(k as f64 * dt);
        out.x.push(x);
        out.v.push(v);
    }
    out.drift = drift;
    out
}

/// Times of upward crossings of `level`, located by cubic Hermite
/// interpolation between samples.
fn upward_crossings(tr: &Trajectory, level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..tr.x.len() {
        let (a, b) = (tr.x[k - 1] - level, tr.x[k] - level);
        if a < 0.0 && b >= 0.0 {
            let h = tr.t[k] - tr.t[k - 1];
            let (va, vb) = (tr.v[k - 1] * h, tr.v[k] * h);
            let p = |s: f64| {
                let s2 = s * s;
                let s3 = s2 * s;
                (2.0 * s3 - 3.0 * s2 + 1.0) * a + (s3 - 2.0 * s2 + s) * va + (-2.0 * s3 + 3.0 * s2) * b + (s3 - s2) * vb
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if p(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(tr.t[k - 1] + 0.5 * (lo + hi) * h);
        }
    }
    out
}

/// First-harmonic amplitude over the first period of a trajectory released
/// from rest (so the phase is zero).
fn first_harmonic(tr: &Trajectory, omega: f64) -> f64 {
    // Trapezoidal rule over the measured period, with a partial last step.
    let period = 2.0 * std::f64::consts::PI / omega;
    let dt = tr.t[1] - tr.t[0];
    let n = (period / dt).floor() as usize;
    let mut acc = 0.0;
    for k in 0..n {
        let (t0, t1) = (tr.t[k], tr.t[k + 1]);
        acc += 0.5 * dt * (tr.x[k] * (omega * t0).cos() + tr.x[k + 1] * (omega * t1).cos());
    }
    let rest = period - n as f64 * dt;
    if rest > 0.0 {
        // Linear pieces are enough for the sub-step tail.
        let (t0, x0) = (tr.t[n], tr.x[n]);
        let x1 = tr.x[n + 1];
        let xe = x0 + (x1 - x0) * rest / dt;
        acc += 0.5 * rest * (x0 * (omega * t0).cos() + xe * (omega * period).cos());
    }
    2.0 * acc / period
}

const STEPS_PER_PERIOD: usize = 400;
const DRIFT_LIMIT: f64 = 1e-6;

/// Angular frequency of the free oscillation whose first-harmonic
/// amplitude is `amplitude`, measured from upward zero-level crossings over
/// at least `cycles` periods.
pub fn ode_frequency_oracle(c: &NonlinearCoefficients, amplitude: f64, cycles: usize) -> Result<f64> {
    if cycles < 50 {
        return Err(Error::invalid("cycles", format!("at least 50 required, got {cycles}")));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::invalid("amplitude", format!("must be ≥ 0, got {amplitude}")));
    }
    let guess = frequency_shift(c, amplitude)?;
    if guess.relative.abs() >= 2.0 * PERTURBATIVE_LIMIT {
        return Err(Error::invalid(
            "amplitude",
            format!(
                "predicted shift {:.3} exceeds twice the perturbative limit",
                guess.relative
            ),
        ));
    }
    if amplitude == 0.0 {
        return Ok(c.omega0);
    }

    // Released from rest at x0, the first harmonic is not x0 when α2 ≠ 0;
    // find x0 whose first harmonic matches the requested amplitude.
    let measure = |x0: f64, periods: f64| -> Result<(f64, f64, Trajectory)> {
        let tr = integrate(c, x0, periods, STEPS_PER_PERIOD);
        if tr.drift > DRIFT_LIMIT {
            return Err(Error::IntegratorAccuracy {
                drift: tr.drift,
                limit: DRIFT_LIMIT,
            });
        }
        let up = upward_crossings(&tr, 0.0);
        if up.len() < 2 {
            return Err(Error::Convergence {
                iterations: 0,
                message: "trajectory does not oscillate about zero".into(),
                trace: Vec::new(),
            });
        }
        let omega = 2.0 * std::f64::consts::PI * (up.len() - 1) as f64 / (up[up.len() - 1] - up[0]);
        let a = first_harmonic(&tr, omega);
        Ok((omega, a, tr))
    };

    let short = 3.0;
    let (mut x_prev, mut a_prev) = (amplitude, measure(amplitude, short)?.1);
    let mut x = amplitude * amplitude / a_prev;
    for it in 0..50 {
        let (_, a, _) = measure(x, short)?;
        let err = a - amplitude;
        if err.abs() <= 1e-12 * amplitude {
            break;
        }
        let slope = (a - a_prev) / (x - x_prev);
        if !(slope.is_finite() && slope != 0.0) {
            break;
        }
        x_prev = x;
        a_prev = a;
        x -= err / slope;
        if it == 49 {
            return Err(Error::Convergence {
                iterations: 50,
                message: "first-harmonic amplitude did not converge".into(),
                trace: Vec::new(),
            });
        }
    }
    let (omega, _, _) = measure(x, cycles as f64 + 1.0)?;
    Ok(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::plane_mode_frequencies;
    use crate::model::{MagnetParticle, PhysicalConstants};

    fn plane() -> PlaneEquilibrium {
        plane_mode_frequencies(&MagnetParticle::new(30.1e-6, 7430.0, 0.71).unwrap(), &PhysicalConstants::default())
            .unwrap()
    }

    #[test]
    fn closed_form_coefficients() {
        let eq = plane();
        let b = nonlinear_coefficients(NonlinearMode::Beta, &eq).unwrap();
        assert_eq!(b.alpha2, 0.0);
        assert!((b.alpha3 / (eq.omega_beta * eq.omega_beta) + 2.0 / 3.0).abs() < 1e-15);
        assert!((b.shift_coefficient() + 0.25).abs() < 1e-15);
        let z = nonlinear_coefficients(NonlinearMode::Z, &eq).unwrap();
        assert!((z.shift_coefficient() * eq.z0 * eq.z0 + 35.0 / 48.0).abs() < 1e-13);
    }

    #[test]
    fn coefficients_match_potential_derivatives() {
        use crate::image::image_potential;
        let p = MagnetParticle::new(30.1e-6, 7430.0, 0.71).unwrap();
        let c = PhysicalConstants::default();
        let eq = plane();
        let u = |z: f64| image_potential(z, 0.0, &p, &c).unwrap();
        let h = 0.01 * eq.z0;
        let z0 = eq.z0;
        // Fourth-order accurate central stencils.
        let d3 = (-u(z0 + 3.0 * h) + 8.0 * u(z0 + 2.0 * h) - 13.0 * u(z0 + h) + 13.0 * u(z0 - h)
            - 8.0 * u(z0 - 2.0 * h)
            + u(z0 - 3.0 * h))
            / (8.0 * h.powi(3));
        let d4 = (-u(z0 + 3.0 * h) + 12.0 * u(z0 + 2.0 * h) - 39.0 * u(z0 + h) + 56.0 * u(z0)
            - 39.0 * u(z0 - h)
            + 12.0 * u(z0 - 2.0 * h)
            - u(z0 - 3.0 * h))
            / (6.0 * h.powi(4));
        let z = nonlinear_coefficients(NonlinearMode::Z, &eq).unwrap();
        let m = p.mass();
        assert!((d3 / (2.0 * m) / z.alpha2 - 1.0).abs() < 1e-5, "{} {}", d3 / (2.0 * m), z.alpha2);
        assert!((d4 / (6.0 * m) / z.alpha3 - 1.0).abs() < 1e-5, "{} {}", d4 / (6.0 * m), z.alpha3);

        let ub = |b: f64| image_potential(z0, b, &p, &c).unwrap();
        let hb = 0.01;
        let d4b = (-ub(3.0 * hb) + 12.0 * ub(2.0 * hb) - 39.0 * ub(hb) + 56.0 * ub(0.0) - 39.0 * ub(-hb)
            + 12.0 * ub(-2.0 * hb)
            - ub(-3.0 * hb))
            / (6.0 * hb.powi(4));
        let b = nonlinear_coefficients(NonlinearMode::Beta, &eq).unwrap();
        assert!((d4b / (6.0 * p.inertia()) / b.alpha3 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shift_examples() {
        let eq = plane();
        let b = nonlinear_coefficients(NonlinearMode::Beta, &eq).unwrap();
        let s = frequency_shift(&b, 0.02).unwrap();
        assert!((s.relative + 1.0e-4).abs() < 1e-15);
        assert!(s.perturbative);
        assert_eq!(frequency_shift(&b, 0.0).unwrap().omega, b.omega0);
        let big = frequency_shift(&b, 1.0).unwrap();
        assert!(!big.perturbative && big.relative < 0.0);
    }

    #[test]
    fn harmonic_oracle_is_exact() {
        let c = NonlinearCoefficients::custom(2.0 * std::f64::consts::PI * 56.5, 0.0, 0.0).unwrap();
        let w = ode_frequency_oracle(&c, 1e-5, 60).unwrap();
        assert!((w / c.omega0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn beta_oracle_matches_closed_form() {
        let b = nonlinear_coefficients(NonlinearMode::Beta, &plane()).unwrap();
        let w = ode_frequency_oracle(&b, 0.1, 60).unwrap();
        let shift = w / b.omega0 - 1.0;
        assert!((shift / -0.0025 - 1.0).abs() < 0.01, "{shift}");
    }

    #[test]
    fn quadratic_shift_is_even_in_alpha2() {
        let w0 = 100.0;
        let a2 = 2000.0;
        let xa = 0.5;
        let plus = NonlinearCoefficients::custom(w0, a2, 0.0).unwrap();
        let minus = NonlinearCoefficients::custom(w0, -a2, 0.0).unwrap();
        let sp = ode_frequency_oracle(&plus, xa, 60).unwrap() / w0 - 1.0;
        let sm = ode_frequency_oracle(&minus, xa, 60).unwrap() / w0 - 1.0;
        let predicted = plus.shift_coefficient() * xa * xa;
        assert!(sp < 0.0 && sm < 0.0);
        assert!((sp / sm - 1.0).abs() < 1e-6, "{sp} {sm}");
        assert!((sp / predicted - 1.0).abs() < 0.05, "{sp} vs {predicted}");
    }

    #[test]
    fn oracle_guards() {
        let b = nonlinear_coefficients(NonlinearMode::Beta, &plane()).unwrap();
        assert!(ode_frequency_oracle(&b, 0.1, 10).is_err());
        assert!(ode_frequency_oracle(&b, 1.5, 60).is_err());
        assert_eq!(ode_frequency_oracle(&b, 0.0, 60).unwrap(), b.omega0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn softening_for_any_amplitude(za in 1e-3f64..0.1, ba in 1e-3f64..0.3) {
            let eq = plane();
            let z = nonlinear_coefficients(NonlinearMode::Z, &eq).unwrap();
            let b = nonlinear_coefficients(NonlinearMode::Beta, &eq).unwrap();
            proptest::prop_assert!(frequency_shift(&z, za * eq.z0).unwrap().relative < 0.0);
            proptest::prop_assert!(frequency_shift(&b, ba).unwrap().relative < 0.0);
        }
    }
}
