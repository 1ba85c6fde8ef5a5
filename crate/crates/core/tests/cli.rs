use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const PAPER: &str = r#"
[particle]
radius_um = 30.1
density_kg_m3 = 7430
remanence_t = 0.71

[trap]
well_radius_mm = 2
well_depth_mm = 4
"#;

const OPTICAL: &str = r#"
[particle]
radius_um = 27
density_kg_m3 = 7430
remanence_t = 0.71
"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn file(&self, name: &str, body: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn trapsim(config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trapsim"));
    cmd.env_remove("TRAPSIM_CONFIG");
    if let Some(c) = config {
        cmd.env("TRAPSIM_CONFIG", c);
    }
    cmd.args(args).output().unwrap()
}

fn ok_json(out: Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    v
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn analyze_reports_the_image_model() {
    let s = Sandbox::new();
    let cfg = s.file("paper.toml", PAPER);
    let v = ok_json(trapsim(Some(&cfg), &["analyze"]));
    assert!(rel(v["image"]["f_z_hz"].as_f64().unwrap(), 56.5) < 0.01);
    assert!(rel(v["image"]["f_beta_hz"].as_f64().unwrap(), 377.0) < 0.015);
    assert!(v["thermal"]["z_rms_m"].as_f64().unwrap() > 0.0);
    assert_eq!(v["config"]["sha256"].as_str().unwrap().len(), 64);

    // Radius inversion needs no scenario.
    let v = ok_json(trapsim(None, &["analyze", "--radius-from", "56.5", "377"]));
    assert!(rel(v["radius_from"]["radius_m"].as_f64().unwrap(), 30.1e-6) < 0.01);
}

#[test]
fn missing_key_exits_2_naming_it() {
    let s = Sandbox::new();
    let cfg = s.file("bad.toml", "[particle]\nradius_um = 30.1\ndensity_kg_m3 = 7430\n");
    let out = trapsim(Some(&cfg), &["analyze"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("remanence_t"));
    assert!(out.stdout.is_empty());

    let cfg = s.file("typo.toml", "[particle]\nradius_mm = 30.1\n");
    assert_eq!(trapsim(Some(&cfg), &["analyze"]).status.code(), Some(2));
    assert_eq!(trapsim(None, &["analyze"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let s = Sandbox::new();
    let cfg = s.file("paper.toml", PAPER);
    for args in [
        &["sweep", "--tilt-range", "0:3"][..],
        &["sweep", "--tilt-range", "0:3:4", "--pressure-range", "0:1:2"],
        &["sense", "--mode", "gamma"],
        &["sweep"],
        &["fit", "damping", "x.csv", "--mode", "q"],
    ] {
        assert_eq!(trapsim(Some(&cfg), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn solve_untilted_and_tilted() {
    let s = Sandbox::new();
    let cfg = s.file("paper.toml", PAPER);
    let flat = ok_json(trapsim(Some(&cfg), &["solve", "--tilt", "0"]));
    let c = &flat["equilibrium"]["configuration"];
    assert!(c["x"].as_f64().unwrap().abs() < 1e-6);
    let z0 = flat["image_reference"]["z0_m"].as_f64().unwrap();
    assert!(rel(c["z"].as_f64().unwrap(), z0) < 0.10);

    let mesh = s.path("mesh.csv");
    let tilted = ok_json(trapsim(Some(&cfg), &["solve", "--tilt", "3", "--mesh-csv", mesh.to_str().unwrap()]));
    let f = tilted["frequencies"].as_object().unwrap();
    assert_eq!(f.len(), 5);
    assert!(f.values().all(|v| v.as_f64().unwrap() > 0.0));
    let header = fs::read_to_string(&mesh).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "cx_m,cy_m,cz_m,nx,ny,nz,area_m2,region,strength_t");
}

#[test]
fn coarse_mesh_failure_is_diagnosed() {
    let s = Sandbox::new();
    let cfg = s.file("paper.toml", PAPER);
    let out = trapsim(Some(&cfg), &["solve", "--tilt", "3", "--resolution", "300"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error:") && err.contains("try a larger --resolution"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn tilt_sweep_rows_and_atomic_output() {
    let s = Sandbox::new();
    let cfg = s.file("paper.toml", PAPER);
    let out = s.path("sweep.csv");
    fs::write(&out, "stale").unwrap();
    let svg = s.path("sweep.svg");
    let r = trapsim(
        Some(&cfg),
        &["sweep", "--tilt-range", "0:3:13", "--resolution", "800", "--out", out.to_str().unwrap(), "--svg", svg.to_str().unwrap()],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "theta_deg,x0,y0,z0,beta0,alpha0,f_x,f_y,f_z,f_beta,f_alpha");
    assert_eq!(lines.len(), 14);
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    // Only the output, the SVG and the scenario remain in the directory.
    assert_eq!(fs::read_dir(s.dir.path()).unwrap().count(), 3);
}

#[test]
fn pressure_sweep_reproduces_gas_slopes() {
    let s = Sandbox::new();
    let cfg = s.file("optical.toml", OPTICAL);
    let slope = |mode: &str| {
        let text = stdout(&trapsim(Some(&cfg), &["sweep", "--pressure-range", "0:1e-3:5", "--mode", mode]));
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').filter_map(|v| v.parse().ok()).collect())
            .collect();
        // Columns after dropping the mode label: P_warm, P_cold, f, ..., total at 8.
        let (a, b) = (&rows[0], &rows[rows.len() - 1]);
        (b[8] - a[8]) / (b[1] - a[1])
    };
    assert!(rel(slope("beta"), 5.35) < 0.03);
    assert!(rel(slope("z"), 5.96) < 0.03);
}

#[test]
fn ringdown_round_trip_through_files() {
    let s = Sandbox::new();
    let data = s.path("ring.csv");
    let svg = s.path("ring.svg");
    let gen = trapsim(
        None,
        &[
            "synth", "ringdown", "--frequency", "50", "--tau", "4", "--duration", "12", "--noise", "1e-3", "--seed", "7", "--out",
            data.to_str().unwrap(),
        ],
    );
    assert!(gen.status.success());
    let v = ok_json(trapsim(None, &["fit", "ringdown", data.to_str().unwrap(), "--svg", svg.to_str().unwrap()]));
    assert!(rel(v["fit"]["tau"].as_f64().unwrap(), 4.0) < 0.01, "{v}");
    assert_eq!(v["demodulated"], true);
    assert!(svg.exists());
}

#[test]
fn psd_round_trip_through_files() {
    let s = Sandbox::new();
    let data = s.path("psd.csv");
    let gen = trapsim(
        None,
        &[
            "synth", "psd", "--frequency", "160", "--q", "421", "--a1", "3.82e-14", "--a0", "1e-12", "--samples", "2097152",
            "--segment", "16384", "--seed", "5", "--out", data.to_str().unwrap(),
        ],
    );
    assert!(gen.status.success());
    assert!(fs::read_to_string(&data).unwrap().starts_with("f_hz,psd\n"));
    let v = ok_json(trapsim(None, &["fit", "psd", data.to_str().unwrap(), "--exclude-bins", "0", "--band", "140", "180"]));
    let p = &v["fit"]["params"];
    assert!(rel(p["q"].as_f64().unwrap(), 421.0) < 0.05, "{v}");
    assert!(rel(p["a1"].as_f64().unwrap(), 3.82e-14) < 0.05);
    assert_eq!(v["fit"]["excluded_bins"], 0);
}

#[test]
fn damping_fit_reports_both_orders() {
    let s = Sandbox::new();
    let data = s.path("tau.csv");
    let gen = trapsim(
        None,
        &[
            "synth", "damping", "--intercept", "4.3e-5", "--slope", "5.35", "--quadratic", "1.5e5", "--p-max", "1e-5", "--seed", "3",
            "--out", data.to_str().unwrap(),
        ],
    );
    assert!(gen.status.success());
    let v = ok_json(trapsim(None, &["fit", "damping", data.to_str().unwrap(), "--order", "2"]));
    let fit = &v["fit"];
    assert_eq!(fit["coefficients"].as_array().unwrap().len(), 3);
    assert!(fit["rss_linear"].as_f64().is_some() && fit["rss_quadratic"].as_f64().is_some());
    let slope = v["coefficients_per_mbar"][1].as_f64().unwrap();
    let se = v["standard_errors_per_mbar"][1].as_f64().unwrap();
    assert!((slope - 5.35).abs() < 3.0 * se, "{slope} ± {se}");

    let bad = s.file("bad.csv", "P_mbar,inv_tau_per_s,mode_label\n1e-6,abc,beta\n");
    let out = trapsim(None, &["fit", "damping", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 1") && err.contains("inv_tau_per_s"), "{err}");
}

#[test]
fn sense_reports_field_sensitivity() {
    let s = Sandbox::new();
    let cfg = s.file("optical.toml", OPTICAL);
    let v = ok_json(trapsim(Some(&cfg), &["sense", "--measured-torque", "6.4e-22", "--mode-q", "z:1:3e7"]));
    assert!(rel(v["sqrt_s_b_t_per_rthz"].as_f64().unwrap(), 14e-15) < 0.10);
    assert!(rel(v["sqrt_s_b_ql_t_per_rthz"].as_f64().unwrap(), 57e-15) < 0.03);
    assert_eq!(v["thermal_limit"], false);

    let v = ok_json(trapsim(Some(&cfg), &["sense", "--mode-q", "alpha:160:421", "--mode-q", "z:56:2e6"]));
    assert_eq!(v["thermal_limit"], true);
    assert_eq!(v["report"]["s_t_source"], "thermal");
    assert!(v["sqrt_s_b_ql_t_per_rthz"].as_f64().unwrap() > 0.0);

    // Without any damping channel there is no Q to default to.
    assert_eq!(trapsim(Some(&cfg), &["sense"]).status.code(), Some(2));
}
