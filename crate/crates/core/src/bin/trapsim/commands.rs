use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::{json, Map, Value};
use trapsim::config::{ConfigSource, ScenarioConfig};
use trapsim::dissipation::{
    damping_budget, damping_points, fit_damping_vs_pressure, pressure_sweep, read_damping_csv, write_budget_csv, BudgetInput,
    DampingBudget, PressureModel,
};
use trapsim::dynamics::{
    default_start, find_equilibrium, mode_spectrum, synthesize_ringdown, tilt_sweep, write_sweep_csv, EquilibriumOptions,
    ModeOptions, NonlinearCoefficients, RingdownSpec,
};
use trapsim::image::{plane_mode_frequencies, radius_from_frequencies, thermal_rms, PlaneEquilibrium};
use trapsim::magnetostatics::io::write_panels;
use trapsim::magnetostatics::{MeshOptions, SolverOptions, TrapModel};
use trapsim::model::PA_PER_MBAR;
use trapsim::noise::{
    demodulate, estimate_psd, fit_exponential_ringdown, fit_frequency_vs_amplitude, fit_lorentzian, lorentzian_model,
    sensitivity_report, synthesize_thermal_process, DemodOptions, LorentzianOptions, ModeQ, ProcessSpec, Residuals,
    TorqueSource, WelchOptions,
};
use trapsim::records::{read_ringdown_csv, write_envelope_csv, RingdownData, SpectrumRecord};
use trapsim::table::{write_atomic, write_rows, Table};
use trapsim::{Error, MagnetParticle, ModeLabel, PhysicalConstants, Result};

use super::plot::{self, Series};
use super::{
    AnalyzeArgs, Cli, Command, DampingArgs, FitKind, PsdArgs, ResidualsArg, RingdownArgs, SenseArgs, SolveArgs, SweepArgs,
    SynthDampingArgs, SynthKind, SynthPsdArgs, SynthRingdownArgs,
};

pub const SCHEMA_VERSION: u32 = 1;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze(a) => analyze(cli, a),
        Command::Solve(a) => solve(cli, a),
        Command::Sweep(a) => sweep(cli, a),
        Command::Fit { kind } => match kind {
            FitKind::Ringdown(a) => fit_ringdown(cli, a),
            FitKind::Psd(a) => fit_psd(cli, a),
            FitKind::Damping(a) => fit_damping(cli, a),
        },
        Command::Sense(a) => sense(cli, a),
        Command::Synth { kind } => match kind {
            SynthKind::Ringdown(a) => synth_ringdown(cli, a),
            SynthKind::Psd(a) => synth_psd(cli, a),
            SynthKind::Damping(a) => synth_damping(cli, a),
        },
    }
}

fn load(cli: &Cli) -> Result<Option<(ScenarioConfig, ConfigSource)>> {
    cli.config.as_deref().map(ScenarioConfig::load).transpose()
}

fn require(cli: &Cli) -> Result<(ScenarioConfig, ConfigSource)> {
    load(cli)?.ok_or_else(|| Error::Config("no scenario file: pass --config or set TRAPSIM_CONFIG".into()))
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Primary output: to `--out` through a temporary file, else stdout.
fn emit(cli: &Cli, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match &cli.out {
        Some(path) => write_atomic(path, body),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush().map_err(|e| Error::Data(format!("stdout: {e}")))
        }
    }
}

fn emit_json(cli: &Cli, command: &str, source: Option<&ConfigSource>, payload: impl Serialize) -> Result<()> {
    let mut doc = Map::new();
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    doc.insert("command".into(), json!(command));
    if let Some(s) = source {
        doc.insert("config".into(), json!(s));
    }
    match serde_json::to_value(payload).map_err(|e| Error::Data(e.to_string()))? {
        Value::Object(m) => doc.extend(m),
        other => {
            doc.insert("result".into(), other);
        }
    }
    emit(cli, |w| {
        serde_json::to_writer_pretty(&mut *w, &Value::Object(doc)).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w).map_err(|e| Error::Data(e.to_string()))
    })
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    write_atomic(path, body)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct ParticleSummary {
    radius_m: f64,
    density_kg_m3: f64,
    remanence_t: f64,
    mass_kg: f64,
    inertia_kg_m2: f64,
    dipole_a_m2: f64,
}

impl From<&MagnetParticle> for ParticleSummary {
    fn from(p: &MagnetParticle) -> Self {
        Self {
            radius_m: p.radius(),
            density_kg_m3: p.density(),
            remanence_t: p.remanence(),
            mass_kg: p.mass(),
            inertia_kg_m2: p.inertia(),
            dipole_a_m2: p.dipole(),
        }
    }
}

fn plane_json(eq: &PlaneEquilibrium) -> Value {
    json!({
        "z0_m": eq.z0,
        "k_z_n_per_m": eq.k_z,
        "k_beta_nm_per_rad": eq.k_beta,
        "f_z_hz": eq.f_z(),
        "f_beta_hz": eq.f_beta(),
    })
}

fn analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<()> {
    let loaded = if args.radius_from.is_some() { load(cli)? } else { Some(require(cli)?) };
    let mut out = Map::new();
    let c = match &loaded {
        Some((cfg, _)) => cfg.constants()?,
        None => PhysicalConstants::default(),
    };
    if let Some((cfg, _)) = &loaded {
        let p = cfg.particle()?;
        let t = cfg.environment()?.t_cold;
        let eq = plane_mode_frequencies(&p, &c)?;
        out.insert("particle".into(), json!(ParticleSummary::from(&p)));
        out.insert("image".into(), plane_json(&eq));
        out.insert(
            "thermal".into(),
            json!({
                "temperature_k": t,
                "z_rms_m": thermal_rms(t, eq.k_z, &c)?,
                "beta_rms_rad": thermal_rms(t, eq.k_beta, &c)?,
            }),
        );
    }
    if let Some(f) = &args.radius_from {
        let two_pi = 2.0 * std::f64::consts::PI;
        let a = radius_from_frequencies(two_pi * f[0], two_pi * f[1], &c)?;
        out.insert("radius_from".into(), json!({ "f_z_hz": f[0], "f_beta_hz": f[1], "radius_m": a }));
    }
    emit_json(cli, "analyze", loaded.as_ref().map(|l| &l.1), Value::Object(out))
}

fn build_model(cfg: &ScenarioConfig, tilt_deg: Option<f64>, resolution: Option<usize>) -> Result<TrapModel> {
    let mut trap = cfg.trap()?;
    if let Some(t) = tilt_deg {
        trap = trap.with_tilt(t.to_radians())?;
    }
    let mesh = match resolution {
        Some(n) => MeshOptions::with_panels(n),
        None => cfg.mesh(),
    };
    TrapModel::new(trap, cfg.constants()?, &mesh, SolverOptions::default())
}

fn solve(cli: &Cli, args: &SolveArgs) -> Result<()> {
    let (cfg, source) = require(cli)?;
    let model = build_model(&cfg, args.tilt, args.resolution)?;
    let panels = model.solver().mesh().len();
    let hint = |e: Error| {
        eprintln!("note: mesh of {panels} panels; an under-resolved mesh is the usual cause, try a larger --resolution");
        e
    };
    let start = default_start(&model)?;
    let eq = find_equilibrium(&model, &start, &EquilibriumOptions::default()).map_err(hint)?;
    let spectrum = mode_spectrum(&model, &eq.configuration, &ModeOptions::default()).map_err(hint)?;
    if let Some(path) = &args.mesh_csv {
        let solution = model.solve(&eq.configuration)?;
        write_file(path, |w| write_panels(w, model.solver().mesh(), Some(&solution)))?;
    }
    let trap = model.trap();
    let frequencies: Map<String, Value> = ModeLabel::ALL
        .iter()
        .map(|l| (format!("f_{l}_hz"), json!(spectrum.frequency(*l))))
        .collect();
    let payload = json!({
        "trap": {
            "well_radius_m": trap.well_radius,
            "well_depth_m": trap.well_depth,
            "tilt_deg": trap.tilt.to_degrees(),
            "panels": panels,
            "condition_estimate": model.solver().condition(),
        },
        "image_reference": plane_json(&plane_mode_frequencies(model.particle(), model.constants())?),
        "equilibrium": eq,
        "frequencies": frequencies,
        "spectrum": spectrum,
    });
    emit_json(cli, "solve", Some(&source), payload)
}

fn budget_input(
    particle: &MagnetParticle,
    cfg: &ScenarioConfig,
    c: &PhysicalConstants,
    mode: ModeLabel,
    frequency: Option<f64>,
) -> Result<BudgetInput> {
    let eq = plane_mode_frequencies(particle, c)?;
    let frequency = match (frequency, mode) {
        (Some(f), _) => f,
        (None, ModeLabel::Z) => eq.f_z(),
        (None, ModeLabel::Beta) => eq.f_beta(),
        (None, m) => return Err(usage(format!("--frequency is required for mode {m}"))),
    };
    Ok(BudgetInput {
        mode,
        frequency,
        z0: eq.z0,
        k_beta: eq.k_beta,
        residual: cfg.residual_rate(),
        pressure_model: cfg.pressure_model(),
    })
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Result<()> {
    let (cfg, _) = require(cli)?;
    if let Some(r) = args.tilt_range {
        let model = build_model(&cfg, Some(0.0), args.resolution)?;
        let thetas: Vec<f64> = r.values(false).iter().map(|d| d.to_radians()).collect();
        let points = tilt_sweep(&model, &thetas, &EquilibriumOptions::default(), &ModeOptions::default())?;
        emit(cli, |w| write_sweep_csv(w, &points))?;
        if let Some(svg) = &args.svg {
            let series: Vec<Series> = ModeLabel::ALL
                .iter()
                .map(|l| Series::line(l.as_str(), points.iter().map(|p| (p.theta.to_degrees(), p.spectrum.frequency(*l))).collect()))
                .collect();
            plot::draw(svg, "Mode frequencies vs tilt", "tilt [deg]", "frequency [Hz]", &series, false, true)?;
        }
        return Ok(());
    }
    let r = args.pressure_range.expect("clap requires one range");
    if args.log && !(r.start > 0.0 && r.stop > 0.0) {
        return Err(usage("--log needs positive pressure limits"));
    }
    if r.start < 0.0 || r.stop < 0.0 {
        return Err(usage("pressures must be ≥ 0"));
    }
    let c = cfg.constants()?;
    let particle = cfg.particle()?;
    let env = cfg.environment()?;
    let input = budget_input(&particle, &cfg, &c, args.mode, args.frequency)?;
    let pressures: Vec<f64> = r.values(args.log).iter().map(|p| p * PA_PER_MBAR).collect();
    let rows = pressure_sweep(&particle, &env, &input, &pressures, &c)?;
    emit(cli, |w| write_budget_csv(w, &rows))?;
    if let Some(svg) = &args.svg {
        let pick = |name: &str, f: fn(&DampingBudget) -> f64| {
            Series::line(name, rows.iter().map(|(_, b)| (b.cold_pressure / PA_PER_MBAR, f(b))).filter(|p| p.1 > 0.0).collect())
        };
        let series = [
            pick("total", |b| b.total),
            pick("gas", |b| b.gas_translational + b.gas_rotational),
            pick("eddy", |b| b.eddy),
            pick("hysteresis", |b| b.hysteresis),
            pick("other", |b| b.residual_other),
        ];
        let log = args.log && r.start > 0.0;
        plot::draw(svg, "Damping budget", "cold pressure [mbar]", "1/τ [1/s]", &series, log, true)?;
    }
    Ok(())
}

fn fit_ringdown(cli: &Cli, args: &RingdownArgs) -> Result<()> {
    let text = read_text(&args.input)?;
    let (envelope, demodulated) = match read_ringdown_csv(text.as_bytes())? {
        RingdownData::Envelope(e) => (e, false),
        RingdownData::Raw(r) => {
            let o = DemodOptions {
                window_cycles: args.window_cycles,
                frequency_hint: args.frequency_hint,
            };
            (demodulate(&r, &o)?, true)
        }
    };
    let fit = fit_exponential_ringdown(&envelope)?;
    let shift = if envelope.iter().all(|s| s.frequency.is_finite()) {
        fit_frequency_vs_amplitude(&envelope).ok()
    } else {
        None
    };
    if let Some(path) = &args.envelope_csv {
        write_file(path, |w| write_envelope_csv(w, &envelope))?;
    }
    if let Some(svg) = &args.svg {
        let data = envelope.iter().filter(|s| s.amplitude > 0.0).map(|s| (s.t, s.amplitude)).collect();
        let model = envelope
            .iter()
            .map(|s| (s.t, fit.amplitude0 * (-s.t * fit.rate).exp()))
            .collect();
        plot::draw(
            svg,
            "Ringdown envelope",
            "t [s]",
            "amplitude",
            &[Series::points("data", data), Series::line("fit", model)],
            false,
            true,
        )?;
    }
    let payload = json!({
        "input": args.input,
        "demodulated": demodulated,
        "envelope_samples": envelope.len(),
        "fit": fit,
        "frequency_shift": shift,
    });
    emit_json(cli, "fit ringdown", None, payload)
}

fn fit_psd(cli: &Cli, args: &PsdArgs) -> Result<()> {
    let text = read_text(&args.input)?;
    let table = Table::parse(text.as_bytes())?;
    let spectrum = if table.has("f_hz") {
        SpectrumRecord::read_csv(text.as_bytes())?
    } else {
        match read_ringdown_csv(text.as_bytes())? {
            RingdownData::Raw(r) => estimate_psd(
                &r,
                &WelchOptions {
                    segment: args.segment,
                    ..WelchOptions::default()
                },
            )?,
            RingdownData::Envelope(_) => {
                return Err(Error::Data("psd fit needs (f_hz, psd) or raw (t_s, signal) columns".into()));
            }
        }
    };
    let options = LorentzianOptions {
        exclude_bins: args.exclude_bins,
        residuals: match args.residuals {
            ResidualsArg::Log => Residuals::Log,
            ResidualsArg::Linear => Residuals::Linear,
        },
        band: args.band.as_ref().map(|b| (b[0], b[1])),
        ..LorentzianOptions::default()
    };
    let fit = fit_lorentzian(&spectrum, &options)?;
    if let Some(svg) = &args.svg {
        let shown = match options.band {
            Some((lo, hi)) => spectrum.band(lo, hi),
            None => spectrum.clone(),
        };
        let data = shown.frequency.iter().zip(&shown.psd).filter(|p| *p.1 > 0.0).map(|(f, p)| (*f, *p)).collect();
        let model = shown.frequency.iter().map(|f| (*f, lorentzian_model(*f, &fit.params))).collect();
        plot::draw(
            svg,
            "Power spectral density",
            "f [Hz]",
            "PSD",
            &[Series::points("data", data), Series::line("Lorentzian", model)],
            false,
            true,
        )?;
    }
    let payload = json!({
        "input": args.input,
        "resolution_hz": spectrum.resolution(),
        "fit": fit,
    });
    emit_json(cli, "fit psd", None, payload)
}

fn fit_damping(cli: &Cli, args: &DampingArgs) -> Result<()> {
    let loaded = load(cli)?;
    let (env, model) = match &loaded {
        Some((cfg, _)) => (cfg.environment()?, cfg.pressure_model()),
        None => (Default::default(), PressureModel::LowPressureLimit),
    };
    let records = read_damping_csv(read_text(&args.input)?.as_bytes())?;
    let points = damping_points(&records, args.mode, &env, &model)?;
    if points.is_empty() {
        return Err(Error::Data(format!("no rows with mode_label `{}`", args.mode)));
    }
    let fit = fit_damping_vs_pressure(&points, args.order)?;
    // Coefficients per mbar^k for reading against gauge units.
    let per_mbar: Vec<f64> = fit.coefficients.iter().enumerate().map(|(k, c)| c * PA_PER_MBAR.powi(k as i32)).collect();
    let se_mbar: Vec<f64> = fit.standard_errors.iter().enumerate().map(|(k, c)| c * PA_PER_MBAR.powi(k as i32)).collect();
    if let Some(svg) = &args.svg {
        let data = points.iter().map(|p| (p.pressure / PA_PER_MBAR, p.rate)).collect();
        let hi = points.iter().map(|p| p.pressure).fold(0.0, f64::max);
        let curve = (0..=100)
            .map(|k| {
                let p = hi * k as f64 / 100.0;
                let y: f64 = fit.coefficients.iter().enumerate().map(|(j, c)| c * p.powi(j as i32)).sum();
                (p / PA_PER_MBAR, y)
            })
            .collect();
        plot::draw(
            svg,
            "Decay rate vs pressure",
            "cold pressure [mbar]",
            "1/τ [1/s]",
            &[Series::points("data", data), Series::line("fit", curve)],
            false,
            false,
        )?;
    }
    let payload = json!({
        "input": args.input,
        "mode": args.mode,
        "fit": fit,
        "coefficients_per_mbar": per_mbar,
        "standard_errors_per_mbar": se_mbar,
    });
    emit_json(cli, "fit damping", loaded.as_ref().map(|l| &l.1), payload)
}

fn sense(cli: &Cli, args: &SenseArgs) -> Result<()> {
    let (cfg, source) = require(cli)?;
    let c = cfg.constants()?;
    let particle = cfg.particle()?;
    let env = cfg.environment()?;
    let modes: Vec<ModeQ> = if args.mode_q.is_empty() {
        let mut v = Vec::new();
        for label in [ModeLabel::Z, ModeLabel::Beta] {
            let input = budget_input(&particle, &cfg, &c, label, None)?;
            let b = damping_budget(&particle, &env, &input, &c)?;
            if !b.q.is_finite() {
                return Err(usage(
                    "no damping channel is active; set chi_imag, conductivity_s_m, pressure_warm_mbar or residual_rate_per_s, or pass --mode-q",
                ));
            }
            v.push(ModeQ {
                label,
                frequency: b.frequency,
                q: b.q,
            });
        }
        v
    } else {
        args.mode_q.clone()
    };
    let measured = args.measured_torque.map(|a| a * a);
    let report = sensitivity_report(&particle, env.t_cold, &modes, measured, args.mode, &c)?;
    let payload = json!({
        "torque_mode": args.mode,
        "thermal_limit": report.s_t_source == Some(TorqueSource::Thermal),
        "sqrt_s_t_nm_per_rthz": report.s_t.map(f64::sqrt),
        "sqrt_s_b_t_per_rthz": report.s_b.map(f64::sqrt),
        "sqrt_s_b_ql_t_per_rthz": report.s_b_ql.sqrt(),
        "report": report,
    });
    emit_json(cli, "sense", Some(&source), payload)
}

fn synth_ringdown(cli: &Cli, a: &SynthRingdownArgs) -> Result<()> {
    let w0 = 2.0 * std::f64::consts::PI * a.frequency;
    let nonlinear = if a.softening != 0.0 {
        Some(NonlinearCoefficients::custom(w0, 0.0, 8.0 * a.softening * w0 * w0 / 3.0)?)
    } else {
        None
    };
    let spec = RingdownSpec {
        frequency: a.frequency,
        tau: a.tau,
        amplitude: a.amplitude,
        nonlinear,
        sample_rate: a.sample_rate.unwrap_or(8.0 * a.frequency),
        duration: a.duration.unwrap_or(3.0 * a.tau),
        noise: a.noise,
        seed: a.seed,
    };
    let r = synthesize_ringdown(&spec)?;
    emit(cli, |w| r.write_csv(w))
}

fn synth_psd(cli: &Cli, a: &SynthPsdArgs) -> Result<()> {
    let r = synthesize_thermal_process(&ProcessSpec {
        frequency: a.frequency,
        q: a.q,
        a1: a.a1,
        a0: a.a0,
        sample_rate: a.sample_rate,
        samples: a.samples,
        seed: a.seed,
    })?;
    if a.raw {
        return emit(cli, |w| r.write_csv(w));
    }
    let s = estimate_psd(
        &r,
        &WelchOptions {
            segment: a.segment,
            ..WelchOptions::default()
        },
    )?;
    emit(cli, |w| s.write_csv(w))
}

fn synth_damping(cli: &Cli, a: &SynthDampingArgs) -> Result<()> {
    if a.points < 2 || !(a.p_max > 0.0) || !(a.noise >= 0.0) {
        return Err(usage("need --points ≥ 2, --p-max > 0 and --noise ≥ 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let rows: Vec<Vec<String>> = (0..a.points)
        .map(|k| {
            let p = a.p_max * k as f64 / (a.points - 1) as f64;
            let y = a.intercept + a.slope * p + a.quadratic * p * p;
            let sigma = a.noise * y.abs();
            vec![
                format!("{p:e}"),
                format!("{:e}", y + sigma * unit.sample(&mut rng)),
                a.mode.to_string(),
                "cold".into(),
                format!("{sigma:e}"),
            ]
        })
        .collect();
    emit(cli, |w| write_rows(w, &["P_mbar", "inv_tau_per_s", "mode_label", "side", "sigma_per_s"], rows))
}
