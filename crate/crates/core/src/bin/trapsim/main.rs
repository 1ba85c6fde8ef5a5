#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trapsim::config::CONFIG_ENV;
use trapsim::noise::ModeQ;
use trapsim::ModeLabel;

/// Levitated-magnet trap simulation and analysis.
#[derive(Parser, Debug)]
#[command(name = "trapsim", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Write the result here (atomically) instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Image-method equilibrium, spring constants and thermal amplitudes.
    Analyze(AnalyzeArgs),
    /// Equilibrium and normal modes in the finite trap.
    Solve(SolveArgs),
    /// Tilt or pressure sweep to CSV.
    Sweep(SweepArgs),
    /// Fit measured or synthetic data.
    Fit {
        #[command(subcommand)]
        kind: FitKind,
    },
    /// Thermal noise floors and magnetometer sensitivity.
    Sense(SenseArgs),
    /// Write synthetic data files.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Infer the radius from measured f_z and f_β [Hz].
    #[arg(long, num_args = 2, value_names = ["F_Z", "F_BETA"])]
    radius_from: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Trap tilt [deg], overriding the scenario.
    #[arg(long)]
    tilt: Option<f64>,
    /// Target panel count, overriding the scenario.
    #[arg(long)]
    resolution: Option<usize>,
    /// Dump panels and their strengths at the equilibrium.
    #[arg(long)]
    mesh_csv: Option<PathBuf>,
}

/// `start:stop:steps`, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Range {
    start: f64,
    stop: f64,
    steps: usize,
}

impl Range {
    fn values(&self, log: bool) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let n = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                let u = k as f64 / n;
                if log {
                    self.start * (self.stop / self.start).powf(u)
                } else {
                    self.start + (self.stop - self.start) * u
                }
            })
            .collect()
    }
}

fn parse_range(s: &str) -> Result<Range, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(format!("expected start:stop:steps, got `{s}`"));
    };
    let start: f64 = a.trim().parse().map_err(|_| format!("bad start `{a}`"))?;
    let stop: f64 = b.trim().parse().map_err(|_| format!("bad stop `{b}`"))?;
    let steps: usize = n.trim().parse().map_err(|_| format!("bad step count `{n}`"))?;
    if !(start.is_finite() && stop.is_finite()) || steps == 0 {
        return Err(format!("range `{s}` needs finite ends and at least one step"));
    }
    Ok(Range { start, stop, steps })
}

fn parse_mode(s: &str) -> Result<ModeLabel, String> {
    s.parse().map_err(|e: trapsim::Error| e.to_string())
}

fn parse_mode_q(s: &str) -> Result<ModeQ, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [label, f, q] = parts.as_slice() else {
        return Err(format!("expected label:f_hz:q, got `{s}`"));
    };
    let frequency: f64 = f.parse().map_err(|_| format!("bad frequency `{f}`"))?;
    let q: f64 = q.parse().map_err(|_| format!("bad Q `{q}`"))?;
    if !(frequency > 0.0 && q > 0.0 && frequency.is_finite() && q.is_finite()) {
        return Err(format!("frequency and Q must be finite and > 0 in `{s}`"));
    }
    Ok(ModeQ {
        label: parse_mode(label)?,
        frequency,
        q,
    })
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Tilt angles [deg] as start:stop:steps.
    #[arg(long, value_parser = parse_range, required_unless_present = "pressure_range", conflicts_with = "pressure_range")]
    tilt_range: Option<Range>,
    /// Warm-gauge pressures [mbar] as start:stop:steps.
    #[arg(long, value_parser = parse_range)]
    pressure_range: Option<Range>,
    /// Space pressure points logarithmically.
    #[arg(long)]
    log: bool,
    /// Mode of the pressure sweep.
    #[arg(long, default_value = "beta", value_parser = parse_mode)]
    mode: ModeLabel,
    /// Mode frequency [Hz]; defaults to the image-method value (z and β only).
    #[arg(long)]
    frequency: Option<f64>,
    /// Target panel count for the tilt sweep.
    #[arg(long)]
    resolution: Option<usize>,
    /// Also draw the sweep as SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum FitKind {
    /// Decay time from a raw (t_s, signal) or envelope (t_s, amplitude) file.
    Ringdown(RingdownArgs),
    /// Lorentzian peak from a (f_hz, psd) or raw (t_s, signal) file.
    Psd(PsdArgs),
    /// Polynomial 1/τ(P) from a (P_mbar, inv_tau_per_s, mode_label) file.
    Damping(DampingArgs),
}

#[derive(Args, Debug)]
struct RingdownArgs {
    input: PathBuf,
    /// Demodulation window length in oscillation periods.
    #[arg(long, default_value_t = 20.0)]
    window_cycles: f64,
    /// Carrier frequency [Hz]; estimated when absent.
    #[arg(long)]
    frequency_hint: Option<f64>,
    /// Write the demodulated envelope as CSV.
    #[arg(long)]
    envelope_csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ResidualsArg {
    Log,
    Linear,
}

#[derive(Args, Debug)]
struct PsdArgs {
    input: PathBuf,
    /// Bins centred on the peak left out of the fit.
    #[arg(long, default_value_t = 9)]
    exclude_bins: usize,
    /// Fit band [Hz].
    #[arg(long, num_args = 2, value_names = ["F_LO", "F_HI"])]
    band: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = ResidualsArg::Log)]
    residuals: ResidualsArg,
    /// Welch segment length for raw time series.
    #[arg(long, default_value_t = 4096)]
    segment: usize,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DampingArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value = "beta", value_parser = parse_mode)]
    mode: ModeLabel,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SenseArgs {
    /// Rotational mode whose torque noise sets the field sensitivity.
    #[arg(long, default_value = "alpha", value_parser = parse_mode)]
    mode: ModeLabel,
    /// Measured torque noise √S_T [N·m/√Hz].
    #[arg(long)]
    measured_torque: Option<f64>,
    /// Mode as label:f_hz:q; repeatable. Defaults to z and β from the
    /// image method with Q from the damping budget.
    #[arg(long = "mode-q", value_name = "LABEL:F_HZ:Q", value_parser = parse_mode_q)]
    mode_q: Vec<ModeQ>,
}

#[derive(Subcommand, Debug)]
enum SynthKind {
    /// Free decay, written as (t_s, signal).
    Ringdown(SynthRingdownArgs),
    /// Thermally driven oscillator, written as a Welch PSD (f_hz, psd).
    Psd(SynthPsdArgs),
    /// Noisy 1/τ(P) points.
    Damping(SynthDampingArgs),
}

#[derive(Args, Debug)]
struct SynthRingdownArgs {
    #[arg(long)]
    frequency: f64,
    /// Amplitude decay time [s].
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Defaults to 8× the frequency.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Defaults to 3τ.
    #[arg(long)]
    duration: Option<f64>,
    /// Additive white noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Relative frequency shift per squared amplitude.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    softening: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SynthPsdArgs {
    #[arg(long)]
    frequency: f64,
    #[arg(long)]
    q: f64,
    /// Peak PSD amplitude A1.
    #[arg(long)]
    a1: f64,
    /// White background A0.
    #[arg(long, default_value_t = 0.0)]
    a0: f64,
    #[arg(long, default_value_t = 1024.0)]
    sample_rate: f64,
    #[arg(long, default_value_t = 1 << 20)]
    samples: usize,
    #[arg(long, default_value_t = 4096)]
    segment: usize,
    /// Emit the time series instead of its PSD.
    #[arg(long)]
    raw: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SynthDampingArgs {
    /// 1/τ at zero pressure [1/s].
    #[arg(long)]
    intercept: f64,
    /// [1/(s·mbar)].
    #[arg(long)]
    slope: f64,
    /// [1/(s·mbar²)].
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    quadratic: f64,
    /// Highest cold-side pressure [mbar].
    #[arg(long, default_value_t = 1e-5)]
    p_max: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Relative Gaussian noise on each rate.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, default_value = "beta", value_parser = parse_mode)]
    mode: ModeLabel,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            if let trapsim::Error::Convergence { trace, .. } | trapsim::Error::Fit { trace, .. } = &e {
                if let Some(last) = trace.last() {
                    eprintln!("  last objective {last:.6e} after {} iterations", trace.len());
                }
            }
            match e {
                trapsim::Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
