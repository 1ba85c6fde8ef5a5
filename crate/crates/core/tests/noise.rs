use std::f64::consts::PI;

use trapsim::dynamics::{synthesize_ringdown, NonlinearCoefficients, RingdownSpec};
use trapsim::noise::*;
use trapsim::records::SpectrumRecord;
use trapsim::{MagnetParticle, ModeLabel, PhysicalConstants};

fn spectrum_of(spec: &ProcessSpec, segment: usize) -> SpectrumRecord {
    let r = synthesize_thermal_process(spec).unwrap();
    estimate_psd(&r, &WelchOptions { segment, overlap: 0.5 }).unwrap()
}

#[test]
fn resolved_peak_is_refit() {
    let spec = ProcessSpec {
        frequency: 160.0,
        q: 421.0,
        a1: 3.82e-14,
        a0: 1e-12,
        sample_rate: 1024.0,
        samples: 1 << 21,
        seed: 5,
    };
    let s = spectrum_of(&spec, 1 << 14);
    let fit = fit_lorentzian(
        &s,
        &LorentzianOptions {
            exclude_bins: 0,
            band: Some((140.0, 180.0)),
            ..Default::default()
        },
    )
    .unwrap();
    let p = fit.params;
    assert!((p.q / 421.0 - 1.0).abs() < 0.05, "{p:?}");
    assert!((p.a1 / 3.82e-14 - 1.0).abs() < 0.05, "{p:?}");
    assert!((p.f0 - 160.0).abs() < 0.01);
}

#[test]
fn moderate_q_process_round_trip() {
    let spec = ProcessSpec {
        frequency: 50.0,
        q: 400.0,
        a1: 1e-10,
        a0: 1e-12,
        sample_rate: 512.0,
        samples: 1 << 21,
        seed: 9,
    };
    let s = spectrum_of(&spec, 1 << 15);
    let fit = fit_lorentzian(
        &s,
        &LorentzianOptions {
            exclude_bins: 0,
            band: Some((40.0, 60.0)),
            ..Default::default()
        },
    )
    .unwrap();
    assert!((fit.params.q / 400.0 - 1.0).abs() < 0.15, "{:?}", fit.params);
}

/// Linewidth far below the bin width: the central bins are leakage.
fn under_resolved() -> SpectrumRecord {
    let spec = ProcessSpec {
        frequency: 160.0,
        q: 2.0e4,
        a1: 1.6e-16,
        a0: 1e-15,
        sample_rate: 1024.0,
        samples: 1 << 20,
        seed: 17,
    };
    spectrum_of(&spec, 1 << 12)
}

#[test]
fn exclusion_recovers_under_resolved_amplitude() {
    let s = under_resolved();
    let band = Some((150.0, 170.0));
    for residuals in [Residuals::Log, Residuals::Linear] {
        let o = LorentzianOptions {
            band,
            residuals,
            ..Default::default()
        };
        let excl = fit_lorentzian(&s, &o).unwrap();
        assert!((excl.params.a1 / 1.6e-16 - 1.0).abs() < 0.10, "{residuals:?} {:?}", excl.params);
        assert_eq!(excl.exclusion_significant, Some(true));
        assert!(excl.standard_errors.q.is_infinite(), "Q is unconstrained by the wings");
    }
}

#[test]
fn leakage_biases_the_unexcluded_linear_fit() {
    let s = under_resolved();
    let fit = fit_lorentzian(
        &s,
        &LorentzianOptions {
            exclude_bins: 0,
            band: Some((150.0, 170.0)),
            residuals: Residuals::Linear,
            ..Default::default()
        },
    )
    .unwrap();
    let bias = fit.params.a1 / 1.6e-16;
    assert!(bias > 2.0, "bias {bias}");
}

#[test]
fn null_peak_is_consistent_with_zero() {
    let spec = ProcessSpec {
        frequency: 160.0,
        q: 100.0,
        a1: 0.0,
        a0: 1e-12,
        sample_rate: 1024.0,
        samples: 1 << 19,
        seed: 2,
    };
    let s = spectrum_of(&spec, 1 << 12);
    let fit = fit_lorentzian(
        &s,
        &LorentzianOptions {
            exclude_bins: 0,
            band: Some((100.0, 220.0)),
            initial: Some(LorentzianParams {
                a0: 1e-12,
                a1: 1e-17,
                f0: 160.0,
                q: 100.0,
            }),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(fit.params.a1 <= 2.0 * fit.standard_errors.a1 + 1e-30, "{fit:?}");
}

#[test]
fn calibrated_pipeline_reproduces_injected_torque() {
    // Same mode observed at two pressures; the flux-per-torque gain is
    // common, so A1 scales with the torque PSD.
    let c = PhysicalConstants::default();
    let inertia = MagnetParticle::new(27e-6, 7430.0, 0.71).unwrap().inertia();
    let f0 = 160.0;
    let w0 = 2.0 * PI * f0;
    let gain = 1e27;
    let torque = |q: f64| thermal_torque_psd(4.2, inertia, w0, q, &c).unwrap();
    // A1 = S_T·gain/(I²ω0⁴) for an oscillator driven by torque noise.
    let a1 = |q: f64| torque(q) * gain / (inertia * inertia * w0.powi(4));
    let (q_high, q_low) = (421.0, 4000.0);
    let fit_at = |q: f64, seed| {
        let spec = ProcessSpec {
            frequency: f0,
            q,
            a1: a1(q),
            a0: a1(q_high) * 10.0,
            sample_rate: 1024.0,
            samples: 1 << 21,
            seed,
        };
        let s = spectrum_of(&spec, 1 << 14);
        fit_lorentzian(
            &s,
            &LorentzianOptions {
                exclude_bins: 0,
                band: Some((140.0, 180.0)),
                ..Default::default()
            },
        )
        .unwrap()
    };
    let high = fit_at(q_high, 1);
    let low = fit_at(q_low, 2);
    let s_low = calibrate_torque(low.params.a1, high.params.a1, torque(q_high)).unwrap();
    assert!((s_low / torque(q_low) - 1.0).abs() < 0.15, "{} vs {}", s_low, torque(q_low));
}

#[test]
fn long_ringdown_tau_is_recovered() {
    let spec = RingdownSpec {
        frequency: 377.0,
        tau: 1.13e4,
        amplitude: 0.02,
        nonlinear: None,
        sample_rate: 1600.0,
        duration: 7000.0,
        noise: 1e-4,
        seed: 4,
    };
    let r = synthesize_ringdown(&spec).unwrap();
    let env = demodulate(&r, &DemodOptions { window_cycles: 2000.0, frequency_hint: None }).unwrap();
    let fit = fit_exponential_ringdown(&env).unwrap();
    assert!((fit.tau / 1.13e4 - 1.0).abs() < 0.01, "{fit:?}");
    assert!(!fit.nonlinear, "{fit:?}");
    let q = fit.q.unwrap();
    assert!((q / (PI * 377.0 * 1.13e4) - 1.0).abs() < 0.01);
}

#[test]
fn softening_slope_is_recovered_from_a_ringdown() {
    let w0 = 2.0 * PI * 20.0;
    let nl = NonlinearCoefficients::custom(w0, 0.0, -0.8 * 8.0 / 3.0 * w0 * w0).unwrap();
    let spec = RingdownSpec {
        frequency: 20.0,
        tau: 40.0,
        amplitude: 0.2,
        nonlinear: Some(nl),
        sample_rate: 400.0,
        duration: 120.0,
        noise: 1e-5,
        seed: 1,
    };
    let r = synthesize_ringdown(&spec).unwrap();
    let env = demodulate(&r, &DemodOptions::default()).unwrap();
    let fit = fit_frequency_vs_amplitude(&env).unwrap();
    let expect = nl.shift_coefficient() * 20.0;
    assert!((fit.slope / expect - 1.0).abs() < 0.02, "{} vs {expect}", fit.slope);
}

#[test]
fn sensitivity_figures() {
    let c = PhysicalConstants::default();
    let p = MagnetParticle::new(27e-6, 7430.0, 0.71).unwrap();
    let modes = [ModeQ {
        label: ModeLabel::Z,
        frequency: 1.0,
        q: 3e7,
    }];
    let r = sensitivity_report(&p, 4.2, &modes, Some(6.4e-22f64.powi(2)), ModeLabel::Alpha, &c).unwrap();
    assert!((r.s_b.unwrap().sqrt() / 14e-15 - 1.0).abs() < 0.10);
    assert!((r.s_b_ql.sqrt() / 57e-15 - 1.0).abs() < 0.03);
    let sa = r.modes[0].s_a.unwrap().sqrt();
    assert!(sa > 3e-10 / 1.5 && sa < 3e-10 * 1.5, "{sa}");
}

