//! Acceptance run: one PASS/FAIL line per criterion, with the measured
//! numbers and the runtime against its budget.
//!
//! The process fails only when an outcome differs from `EXPECTED_FAIL`, so a
//! regression and an unexpected fix are both loud.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use trapsim::dissipation::*;
use trapsim::dynamics::*;
use trapsim::image::{equilibrium_height, plane_mode_frequencies, radius_from_frequencies};
use trapsim::magnetostatics::{Formulation, MeshOptions, SolverOptions, TrapModel, DEFAULT_PANELS};
use trapsim::model::HELIUM_MASS;
use trapsim::noise::*;
use trapsim::records::SpectrumRecord;
use trapsim::{Configuration, MagnetParticle, ModeLabel, PhysicalConstants, Result, TrapSystem};

/// Criteria known not to hold; see the README.
const EXPECTED_FAIL: &[u32] = &[4];

const MBAR: f64 = 100.0;

struct Checks {
    pass: bool,
    lines: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self {
            pass: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.lines.push(format!("{}{line}", if ok { "" } else { "[x] " }));
    }

    fn rel(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        let ok = (got / want - 1.0).abs() <= tol;
        self.check(ok, format!("{name} = {got:.4e} (want {want:.4e} ± {:.1}%)", tol * 100.0));
    }

    fn factor(&mut self, name: &str, got: f64, want: f64, factor: f64) {
        let ok = got >= want / factor && got <= want * factor;
        self.check(ok, format!("{name} = {got:.3e} (want {want:.1e} within ×{factor})"));
    }
}

fn run(n: u32, title: &str, budget: Duration, f: impl FnOnce() -> Result<Checks>) -> bool {
    let t = Instant::now();
    let result = f();
    let elapsed = t.elapsed();
    let (mut pass, mut lines) = match result {
        Ok(c) => (c.pass, c.lines),
        Err(e) => (false, vec![format!("[x] error: {e}")]),
    };
    if elapsed > budget {
        pass = false;
        lines.push(format!("[x] runtime {elapsed:.2?} over budget {budget:?}"));
    }
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2}: {verdict}  {title}  [{elapsed:.2?} / {budget:?}]");
    for l in lines {
        println!("        {l}");
    }
    pass
}

fn sphere(radius: f64) -> MagnetParticle {
    MagnetParticle::new(radius, 7430.0, 0.71).unwrap()
}

fn image_reproduction() -> Result<Checks> {
    let eq = plane_mode_frequencies(&sphere(30.1e-6), &PhysicalConstants::default())?;
    let mut c = Checks::new();
    c.rel("z0 [m]", eq.z0, 311e-6, 0.02);
    c.rel("f_z [Hz]", eq.f_z(), 56.5, 0.01);
    c.rel("f_beta [Hz]", eq.f_beta(), 377.0, 0.015);
    Ok(c)
}

fn radius_inversion() -> Result<Checks> {
    let a = radius_from_frequencies(2.0 * PI * 56.5, 2.0 * PI * 377.0, &PhysicalConstants::default())?;
    let mut c = Checks::new();
    c.rel("radius [m]", a, 30.1e-6, 0.01);
    Ok(c)
}

fn energy_minimum(m: &TrapModel, z0: f64) -> Result<f64> {
    let f = |z: f64| m.full_potential(&Configuration::new(0.0, 0.0, z, 0.0, 0.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.7 * z0, 1.3 * z0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c)? < f(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(0.5 * (a + b))
}

// The direct layer carries the whole induced field, so the image solution
// is an independent oracle for it.
fn magnetostatics_oracle() -> Result<Checks> {
    let consts = PhysicalConstants::default();
    let p = sphere(30.1e-6);
    let z0 = equilibrium_height(&p, &consts)?;
    let radius = 4e-3;
    let trap = TrapSystem::new(p, radius, 4e-3)?;
    let direct = SolverOptions {
        formulation: Formulation::Direct,
        ..SolverOptions::default()
    };
    let at = |panels: usize, opts: SolverOptions| -> Result<f64> {
        let m = TrapModel::new(trap, consts, &MeshOptions::with_panels(panels), opts)?;
        energy_minimum(&m, z0)
    };
    let mut c = Checks::new();
    c.check(z0 / radius <= 0.1, format!("h/R = {:.3}", z0 / radius));
    c.rel(&format!("minimum, direct, {DEFAULT_PANELS} panels"), at(DEFAULT_PANELS, direct)?, z0, 0.10);
    c.rel(&format!("minimum, split, {DEFAULT_PANELS} panels"), at(DEFAULT_PANELS, SolverOptions::default())?, z0, 0.10);
    let mid = at(3000, direct)?;
    let fine = at(4800, direct)?;
    c.check(
        (fine / mid - 1.0).abs() < 0.005,
        format!("converged: 3000 → 4800 panels moves the minimum by {:.2}%", 100.0 * (fine / mid - 1.0).abs()),
    );
    c.rel("minimum, direct, 4800 panels", fine, z0, 0.01);
    Ok(c)
}

fn tilt_sweep_property() -> Result<Checks> {
    let trap = TrapSystem::new(sphere(30.1e-6), 2e-3, 4e-3)?;
    let m = TrapModel::new(trap, PhysicalConstants::default(), &MeshOptions::default(), SolverOptions::default())?;
    let thetas: Vec<f64> = (0..=6).map(|k| (0.5 * k as f64).to_radians()).collect();
    let pts = tilt_sweep(&m, &thetas, &EquilibriumOptions::default(), &ModeOptions::default())?;
    let spread = |label: ModeLabel, skip_neutral: bool| {
        let fs: Vec<f64> = pts
            .iter()
            .filter(|p| !(skip_neutral && p.spectrum.mode(label).neutral))
            .map(|p| p.spectrum.frequency(label))
            .collect();
        let hi = fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = fs.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi - lo) / hi
    };
    let mut c = Checks::new();
    for p in &pts {
        let f = p.spectrum.frequencies();
        c.lines.push(format!(
            "θ = {:.1}°: f = ({:.2}, {:.2}, {:.2}, {:.1}, {:.1}) Hz",
            p.theta.to_degrees(),
            f[0],
            f[1],
            f[2],
            f[3],
            f[4]
        ));
    }
    for label in [ModeLabel::Z, ModeLabel::Beta] {
        let v = spread(label, false);
        c.check(v < 0.05, format!("{} varies {:.1}% (want < 5%)", label.as_str(), 100.0 * v));
    }
    // α is neutral when untilted; its variation is taken where it is trapped.
    let soft: Vec<(ModeLabel, f64)> = [ModeLabel::X, ModeLabel::Y, ModeLabel::Alpha].iter().map(|&l| (l, spread(l, true))).collect();
    let (best, v) = soft.iter().cloned().fold((ModeLabel::X, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let listing: Vec<String> = soft.iter().map(|(l, v)| format!("{} {:.0}%", l.as_str(), 100.0 * v)).collect();
    c.check(v > 0.20, format!("largest soft-mode variation {} {:.0}% (want > 20%; {})", best.as_str(), 100.0 * v, listing.join(", ")));
    Ok(c)
}

/// Oracle shift against x = (A/scale)²: the chord through the origin, and
/// the slope at the origin from fitting shift/x = s + c·x.
fn oracle_slopes(nl: &NonlinearCoefficients, amplitudes: &[f64]) -> Result<(f64, f64)> {
    let mut pts = Vec::with_capacity(amplitudes.len());
    for &a in amplitudes {
        let shift = ode_frequency_oracle(nl, a, 60)? / nl.omega0 - 1.0;
        pts.push(((a / nl.scale).powi(2), shift));
    }
    let chord = pts.iter().map(|(x, y)| x * y).sum::<f64>() / pts.iter().map(|(x, _)| x * x).sum::<f64>();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1 / p.0).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y / x - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok((my - sxy / sxx * mx, chord))
}

fn nonlinear_shift() -> Result<Checks> {
    let eq = plane_mode_frequencies(&sphere(30.1e-6), &PhysicalConstants::default())?;
    let z = nonlinear_coefficients(NonlinearMode::Z, &eq)?;
    let b = nonlinear_coefficients(NonlinearMode::Beta, &eq)?;
    // Predicted shifts from 0.01% to 1%.
    let shifts = [1e-4, 3e-4, 1e-3, 3e-3, 6e-3, 1e-2];
    let za: Vec<f64> = shifts.iter().map(|s| eq.z0 * (s * 48.0 / 35.0f64).sqrt()).collect();
    let ba: Vec<f64> = shifts.iter().map(|s| (s * 4.0f64).sqrt()).collect();
    let mut c = Checks::new();
    c.rel("z analytic coefficient", z.shift_coefficient() * eq.z0 * eq.z0, -35.0 / 48.0, 1e-12);
    c.rel("beta analytic coefficient", b.shift_coefficient(), -0.25, 1e-12);
    for (name, nl, amps, want) in [("z", &z, &za, -35.0 / 48.0), ("beta", &b, &ba, -0.25)] {
        let (slope, chord) = oracle_slopes(nl, amps)?;
        c.rel(&format!("{name} oracle slope"), slope, want, 0.05);
        c.lines.push(format!("{name} chord through the origin over the same points = {chord:.4}"));
    }
    Ok(c)
}

fn gas_damping_slopes() -> Result<Checks> {
    let consts = PhysicalConstants::default();
    let v = mean_thermal_velocity(4.2, HELIUM_MASS, &consts)?;
    let p = sphere(27e-6);
    let t = gas_damping(MBAR, &p, v, GasDampingKind::Translational)?;
    let r = gas_damping(MBAR, &p, v, GasDampingKind::Rotational)?;
    let mut c = Checks::new();
    c.rel("translational slope [1/(s·mbar)]", t, 5.96, 0.03);
    c.rel("rotational slope [1/(s·mbar)]", r, 5.35, 0.03);
    c.rel("translational/rotational ratio", t / r, (1.0 + 8.0 / PI) * PI / 10.0, 1e-12);
    Ok(c)
}

fn loss_estimates() -> Result<Checks> {
    let consts = PhysicalConstants::default();
    let p = sphere(27e-6).with_conductivity(1e6)?;
    let eq = plane_mode_frequencies(&p, &consts)?;
    let eddy = eddy_current_q(&p, eq.omega_beta, eq.z0, eq.k_beta, &consts)?;
    let mut c = Checks::new();
    c.factor("Q_ec", eddy.q, 1e11, 3.0);
    c.rel("chi'' from Q = 2.7e7", chi_imag_from_q(2.7e7, 27e-6, 311e-6)?, 1.4e-3, 0.10);
    c.rel("Q_m from chi'' = 1.4e-3", hysteresis_q(&sphere(27e-6).with_chi_imag(1.4e-3)?, 311e-6)?, 2.7e7, 0.10);
    let inv_q = |a: f64| -> Result<f64> {
        let p = sphere(a).with_chi_imag(1e-3)?;
        let z0 = plane_mode_frequencies(&p, &consts)?.z0;
        Ok(1.0 / hysteresis_q(&p, z0)?)
    };
    let slope = (inv_q(100e-6)? / inv_q(10e-6)?).ln() / 10f64.ln();
    c.check((slope - 0.75).abs() <= 0.01, format!("d ln(1/Q_m)/d ln a = {slope:.4} (want 0.75 ± 0.01)"));
    Ok(c)
}

fn ringdown_q() -> Result<Checks> {
    let mut c = Checks::new();
    c.rel("Q(377 Hz, 1.13e4 s)", q_from_ringdown(377.0, 1.13e4)?, 1.34e7, 0.005);
    c.rel("Q(56.5 Hz, 1.17e4 s)", q_from_ringdown(56.5, 1.17e4)?, 2.08e6, 0.005);
    Ok(c)
}

fn spectrum_of(spec: &ProcessSpec, segment: usize) -> Result<SpectrumRecord> {
    let r = synthesize_thermal_process(spec)?;
    estimate_psd(&r, &WelchOptions { segment, overlap: 0.5 })
}

fn noise_pipeline() -> Result<Checks> {
    let resolved = ProcessSpec {
        frequency: 160.0,
        q: 421.0,
        a1: 3.82e-14,
        a0: 1e-12,
        sample_rate: 1024.0,
        samples: 1 << 21,
        seed: 5,
    };
    let fit = fit_lorentzian(
        &spectrum_of(&resolved, 1 << 14)?,
        &LorentzianOptions {
            exclude_bins: 0,
            band: Some((140.0, 180.0)),
            ..Default::default()
        },
    )?;
    let mut c = Checks::new();
    c.rel("resolved Q", fit.params.q, 421.0, 0.05);
    c.rel("resolved A1", fit.params.a1, 3.82e-14, 0.05);

    // Linewidth far below the bin width.
    let narrow = ProcessSpec {
        frequency: 160.0,
        q: 2.0e4,
        a1: 1.6e-16,
        a0: 1e-15,
        sample_rate: 1024.0,
        samples: 1 << 20,
        seed: 17,
    };
    let fit = fit_lorentzian(
        &spectrum_of(&narrow, 1 << 12)?,
        &LorentzianOptions {
            exclude_bins: 9,
            band: Some((150.0, 170.0)),
            ..Default::default()
        },
    )?;
    c.rel("under-resolved A1, 9 bins excluded", fit.params.a1, 1.6e-16, 0.10);

    let s_t = calibrate_torque(1.6e-16, 3.82e-14, 1.00e-20f64.powi(2))?;
    c.rel("calibrated sqrt(S_T) [N·m/√Hz]", s_t.sqrt(), 6.4e-22, 0.03);
    Ok(c)
}

fn sensitivity() -> Result<Checks> {
    let consts = PhysicalConstants::default();
    let p = sphere(27e-6);
    let modes = [ModeQ {
        label: ModeLabel::Z,
        frequency: 1.0,
        q: 3e7,
    }];
    let r = sensitivity_report(&p, 4.2, &modes, Some(6.4e-22f64.powi(2)), ModeLabel::Alpha, &consts)?;
    let mut c = Checks::new();
    c.rel("sqrt(S_B) [T/√Hz]", r.s_b.unwrap_or(f64::NAN).sqrt(), 14e-15, 0.10);
    c.rel("sqrt(S_B,QL) [T/√Hz]", r.s_b_ql.sqrt(), 57e-15, 0.03);
    c.factor("sqrt(S_a) at 1 Hz, Q = 3e7 [m/s²/√Hz]", r.modes[0].s_a.unwrap_or(f64::NAN).sqrt(), 3e-10, 1.5);
    // Measured decay times of the two well-characterized modes.
    let measured = [
        ModeQ {
            label: ModeLabel::Beta,
            frequency: 377.0,
            q: q_from_ringdown(377.0, 1.13e4)?,
        },
        ModeQ {
            label: ModeLabel::Z,
            frequency: 56.5,
            q: q_from_ringdown(56.5, 1.17e4)?,
        },
    ];
    let r = sensitivity_report(&p, 4.2, &measured, None, ModeLabel::Beta, &consts)?;
    for m in &r.modes {
        c.factor(&format!("T/tau, {} [K/s]", m.label.as_str()), m.t_over_tau, 1e-4, 10.0);
    }
    Ok(c)
}

fn synthetic_points(rng: &mut ChaCha8Rng, truth: [f64; 3], noise: f64, n: usize) -> Vec<DampingPoint> {
    let unit = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|k| {
            let p = 1e-3 * k as f64 / (n - 1) as f64;
            let y = truth[0] + truth[1] * p + truth[2] * p * p;
            DampingPoint {
                pressure: p,
                rate: y * (1.0 + noise * unit.sample(rng)),
                sigma: Some(noise * y),
            }
        })
        .collect()
}

fn fit_recovery() -> Result<Checks> {
    let truth = [4.3e-5, 5.35, 1500.0];
    let names = ["intercept", "slope", "quadratic"];
    let mut c = Checks::new();
    // A single draw misses its 2σ interval about 5% of the time, so the
    // fixed seed is reported and coverage decides.
    let fit = fit_damping_vs_pressure(&synthetic_points(&mut ChaCha8Rng::seed_from_u64(2024), truth, 0.02, 50), 2)?;
    for k in 0..3 {
        let z = (fit.coefficients[k] - truth[k]) / fit.standard_errors[k];
        c.lines.push(format!("{} off by {z:+.2} standard errors at seed 2024", names[k]));
    }
    let trials = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut covered = [0usize; 3];
    for _ in 0..trials {
        let fit = fit_damping_vs_pressure(&synthetic_points(&mut rng, truth, 0.02, 50), 2)?;
        for k in 0..3 {
            covered[k] += usize::from((fit.coefficients[k] - truth[k]).abs() <= 2.0 * fit.standard_errors[k]);
        }
    }
    for k in 0..3 {
        let frac = covered[k] as f64 / trials as f64;
        c.check(frac > 0.91 && frac < 0.99, format!("{} 2σ coverage {:.1}% over {trials} draws", names[k], 100.0 * frac));
    }
    Ok(c)
}

fn main() -> ExitCode {
    let s = Duration::from_secs;
    let outcomes = [
        (1, run(1, "image-method reproduction", s(1), image_reproduction)),
        (2, run(2, "radius inversion", s(1), radius_inversion)),
        (3, run(3, "magnetostatics oracle", s(300), magnetostatics_oracle)),
        (4, run(4, "tilt-sweep property", s(1800), tilt_sweep_property)),
        (5, run(5, "nonlinear shift", s(60), nonlinear_shift)),
        (6, run(6, "gas damping", s(1), gas_damping_slopes)),
        (7, run(7, "loss estimates", s(1), loss_estimates)),
        (8, run(8, "Q from ringdown", s(1), ringdown_q)),
        (9, run(9, "noise pipeline", s(60), noise_pipeline)),
        (10, run(10, "sensitivity", s(1), sensitivity)),
        (11, run(11, "fit recovery", s(1), fit_recovery)),
    ];
    let passed = outcomes.iter().filter(|o| o.1).count();
    println!("\n{passed}/{} criteria pass", outcomes.len());
    let surprises: Vec<u32> = outcomes.iter().filter(|(n, pass)| *pass == EXPECTED_FAIL.contains(n)).map(|o| o.0).collect();
    if surprises.is_empty() {
        if !EXPECTED_FAIL.is_empty() {
            println!("failures match the recorded expectation: {EXPECTED_FAIL:?}");
        }
        ExitCode::SUCCESS
    } else {
        println!("outcome differs from the recorded expectation for: {surprises:?}");
        ExitCode::FAILURE
    }
}
