//! Equilibria and spectra over a range of trap tilts.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::equilibrium::{find_equilibrium, EquilibriumOptions};
use super::modes::{mode_spectrum, ModeOptions, ModeSpectrum};
use crate::error::{Error, Result};
use crate::image::equilibrium_height;
use crate::magnetostatics::TrapModel;
use crate::model::Configuration;
use crate::table::write_rows;

pub const MAX_SWEEP_TILT_DEG: f64 = 10.0;

pub const SWEEP_HEADER: [&str; 11] = [
    "theta_deg", "x0", "y0", "z0", "beta0", "alpha0", "f_x", "f_y", "f_z", "f_beta", "f_alpha",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Tilt [rad].
    pub theta: f64,
    pub equilibrium: Configuration,
    pub spectrum: ModeSpectrum,
}

/// Starting guess on the axis at the image height, with the moment
/// perpendicular to the tilt direction.
pub fn default_start(model: &TrapModel) -> Result<Configuration> {
    let z0 = equilibrium_height(model.particle(), model.constants())?;
    let a = model.trap().tilt_axis;
    Ok(Configuration::new(0.0, 0.0, z0, 0.0, a[1].atan2(a[0]) + FRAC_PI_2))
}

fn solve_at(model: &TrapModel, start: &Configuration, eq: &EquilibriumOptions, modes: &ModeOptions) -> Result<(Configuration, ModeSpectrum)> {
    let e = find_equilibrium(model, start, eq)?;
    let s = mode_spectrum(model, &e.configuration, modes)?;
    Ok((e.configuration, s))
}

/// Each point is warm-started from the previous equilibrium; on failure a
/// fresh start from the axis is tried before giving up.
pub fn tilt_sweep(
    model: &TrapModel,
    thetas: &[f64],
    eq: &EquilibriumOptions,
    modes: &ModeOptions,
) -> Result<Vec<SweepPoint>> {
    let limit = MAX_SWEEP_TILT_DEG.to_radians();
    if let Some(bad) = thetas.iter().find(|t| !(**t >= 0.0 && **t <= limit)) {
        return Err(Error::invalid("theta", format!("sweep angles must lie in [0°, 10°], got {:.3}°", bad.to_degrees())));
    }
    let mut out: Vec<SweepPoint> = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let tagged = |e: Error| Error::AtTilt {
            theta_deg: theta.to_degrees(),
            source: Box::new(e),
        };
        let m = model.with_tilt(theta).map_err(tagged)?;
        let fresh = default_start(&m).map_err(tagged)?;
        let start = out.last().map_or(fresh, |p| p.equilibrium);
        let result = solve_at(&m, &start, eq, modes).or_else(|e| if start == fresh { Err(e) } else { solve_at(&m, &fresh, eq, modes) });
        let (equilibrium, spectrum) = result.map_err(tagged)?;
        out.push(SweepPoint {
            theta,
            equilibrium,
            spectrum,
        });
    }
    Ok(out)
}

/// One row per point with the documented sweep header.
pub fn write_sweep_csv(w: &mut dyn Write, points: &[SweepPoint]) -> Result<()> {
    let rows = points.iter().map(|p| {
        let c = &p.equilibrium;
        let mut row = vec![
            format!("{}", p.theta * 180.0 / PI),
            format!("{:e}", c.x),
            format!("{:e}", c.y),
            format!("{:e}", c.z),
            format!("{:e}", c.beta),
            format!("{:e}", c.alpha),
        ];
        row.extend(p.spectrum.frequencies().iter().map(|f| format!("{f:e}")));
        row
    });
    write_rows(w, &SWEEP_HEADER, rows)
}

/// (max − min)/max over the sweep for each label in (x, y, z, β, α) order.
pub fn relative_variation(points: &[SweepPoint]) -> [f64; 5] {
    std::array::from_fn(|i| {
        let fs = points.iter().map(|p| p.spectrum.frequencies()[i]);
        let (lo, hi) = fs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), f| (a.min(f), b.max(f)));
        if hi > 0.0 {
            (hi - lo) / hi
        } else {
            0.0
        }
    })
}
