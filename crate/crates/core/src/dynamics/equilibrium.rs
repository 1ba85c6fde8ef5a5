//! Local minima of the full potential over (x, y, z, β, α).
//!
//! Work is done in scaled coordinates: lengths in units of the image-method
//! height L, angles in radians, energies in units of m g L. All five
//! stiffnesses are then O(0.01–1).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::equilibrium_height;
use crate::magnetostatics::{LocalPotential, TrapModel};
use crate::model::Configuration;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOptions {
    /// Budget of simplex evaluations across all restarts.
    pub max_evaluations: usize,
    /// Largest accepted scaled gradient component.
    pub gradient_tolerance: f64,
    pub max_polish_sweeps: usize,
    /// Quadrature is re-planned once the point drifts this far (units of L)
    /// from the plan reference.
    pub replan_distance: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 6000,
            gradient_tolerance: 1e-7,
            max_polish_sweeps: 200,
            replan_distance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub configuration: Configuration,
    /// Full potential at the minimum [J].
    pub energy: f64,
    /// Finite-difference gradient [J/m, J/m, J/m, J/rad, J/rad].
    pub gradient: [f64; 5],
    pub evaluations: usize,
}

const SIMPLEX_STEPS: [f64; 5] = [0.1, 0.1, 0.05, 0.1, 0.3];
const POLISH_STEP: f64 = 1e-4;
const MAX_RESTARTS: usize = 4;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Scales {
    pub length: f64,
    pub energy: f64,
}

impl Scales {
    pub fn of(model: &TrapModel) -> Result<Self> {
        let length = equilibrium_height(model.particle(), model.constants())?;
        Ok(Self {
            length,
            energy: model.particle().mass() * model.constants().g * length,
        })
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        if i < 3 {
            self.length
        } else {
            1.0
        }
    }

    pub fn scale(&self, cfg: &Configuration) -> [f64; 5] {
        let q = cfg.coords();
        std::array::from_fn(|i| q[i] / self.coordinate(i))
    }

    pub fn unscale(&self, u: &[f64; 5], gamma: f64) -> Configuration {
        Configuration::from_coords(std::array::from_fn(|i| u[i] * self.coordinate(i)), gamma)
    }
}

/// Scaled energy with the quadrature plan following the point.
struct Objective<'a> {
    model: &'a TrapModel,
    scales: Scales,
    gamma: f64,
    replan: f64,
    local: Option<LocalPotential<'a>>,
    evaluations: usize,
}

impl<'a> Objective<'a> {
    fn new(model: &'a TrapModel, scales: Scales, gamma: f64, replan: f64) -> Self {
        Self {
            model,
            scales,
            gamma,
            replan,
            local: None,
            evaluations: 0,
        }
    }

    /// +∞ outside the region where the discretized energy is trustworthy,
    /// so the simplex simply backs off.
    fn value(&mut self, u: &[f64; 5]) -> f64 {
        self.evaluations += 1;
        let cfg = self.scales.unscale(u, self.gamma);
        if self.model.check_inside(&cfg).is_err() {
            return f64::INFINITY;
        }
        let r = cfg.position();
        match self.model.solver().clearance(&r) {
            Ok((ratio, _)) if ratio >= self.model.solver().options().resolution_ratio => {}
            _ => return f64::INFINITY,
        }
        let stale = match &self.local {
            Some(l) => (l.reference() - r).norm() > self.replan * self.scales.length,
            None => true,
        };
        if stale {
            match self.model.local(&cfg) {
                Ok(l) => self.local = Some(l),
                Err(_) => return f64::INFINITY,
            }
        }
        let local = self.local.as_ref().expect("plan present");
        local.energy(&cfg).map_or(f64::INFINITY, |e| e / self.scales.energy)
    }
}

struct SimplexResult {
    best: [f64; 5],
    value: f64,
    converged: bool,
}

/// Nelder–Mead with the standard coefficients (1, 2, ½, ½).
fn nelder_mead(
    f: &mut impl FnMut(&[f64; 5]) -> f64,
    start: [f64; 5],
    steps: [f64; 5],
    budget: usize,
    trace: &mut Vec<f64>,
) -> SimplexResult {
    // Re-planning the quadrature shifts energies by ~1e-9 of m g L, so a
    // collapsed simplex may still show a spread of that size.
    const FTOL: f64 = 1e-8;
    const XTOL: f64 = 1e-5;
    // Flat directions never shrink the simplex; a long stall of the best
    // value with a small spread counts as converged.
    const STALL: usize = 200;
    let mut pts: Vec<[f64; 5]> = vec![start];
    for i in 0..5 {
        let mut p = start;
        p[i] += steps[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(&mut *f).collect();
    let mut used = 6;
    let combine = |a: &[f64; 5], b: &[f64; 5], t: f64| -> [f64; 5] { std::array::from_fn(|i| a[i] + t * (b[i] - a[i])) };
    loop {
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&k| pts[k]).collect();
        vals = order.iter().map(|&k| vals[k]).collect();
        trace.push(vals[0]);

        let spread = (vals[5] - vals[0]).abs();
        let size = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let tol = FTOL * (1.0 + vals[0].abs());
        let stalled = trace.len() > STALL && trace[trace.len() - 1 - STALL] - vals[0] <= tol;
        if vals[0].is_finite() && (size <= XTOL || (stalled && spread <= tol)) {
            return SimplexResult {
                best: pts[0],
                value: vals[0],
                converged: true,
            };
        }
        if used >= budget {
            return SimplexResult {
                best: pts[0],
                value: vals[0],
                converged: false,
            };
        }

        let centroid: [f64; 5] = std::array::from_fn(|i| pts[..5].iter().map(|p| p[i]).sum::<f64>() / 5.0);
        let reflected = combine(&centroid, &pts[5], -1.0);
        let fr = f(&reflected);
        used += 1;
        if fr < vals[0] {
            let expanded = combine(&centroid, &pts[5], -2.0);
            let fe = f(&expanded);
            used += 1;
            if fe < fr {
                pts[5] = expanded;
                vals[5] = fe;
            } else {
                pts[5] = reflected;
                vals[5] = fr;
            }
        } else if fr < vals[4] {
            pts[5] = reflected;
            vals[5] = fr;
        } else {
            let (target, ft) = if fr < vals[5] { (reflected, fr) } else { (pts[5], vals[5]) };
            let contracted = combine(&centroid, &target, 0.5);
            let fc = f(&contracted);
            used += 1;
            if fc < ft {
                pts[5] = contracted;
                vals[5] = fc;
            } else {
                for k in 1..6 {
                    pts[k] = combine(&pts[0], &pts[k], 0.5);
                    vals[k] = f(&pts[k]);
                }
                used += 5;
            }
        }
    }
}

/// Central-difference gradient of a scaled energy.
pub(crate) fn gradient(e: &mut impl FnMut(&[f64; 5]) -> Result<f64>, u: &[f64; 5], h: f64) -> Result<[f64; 5]> {
    let mut g = [0.0; 5];
    for i in 0..5 {
        let mut p = *u;
        p[i] += h;
        let fp = e(&p)?;
        p[i] = u[i] - h;
        let fm = e(&p)?;
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

struct Polish {
    gradient: [f64; 5],
    curvature: [f64; 5],
    converged: bool,
}

/// Coordinate-wise parabolic steps with a fixed quadrature plan.
fn polish(local: &LocalPotential<'_>, scales: Scales, gamma: f64, u: &mut [f64; 5], options: &EquilibriumOptions, evaluations: &mut usize) -> Result<Polish> {
    let mut e = |p: &[f64; 5]| -> Result<f64> {
        *evaluations += 1;
        Ok(local.energy(&scales.unscale(p, gamma))? / scales.energy)
    };
    let h = POLISH_STEP;
    let mut curvature = [0.0; 5];
    for _ in 0..options.max_polish_sweeps {
        for i in 0..5 {
            let f0 = e(u)?;
            let mut p = *u;
            p[i] += h;
            let fp = e(&p)?;
            p[i] = u[i] - h;
            let fm = e(&p)?;
            let c = (fp - 2.0 * f0 + fm) / (h * h);
            let g = (fp - fm) / (2.0 * h);
            curvature[i] = c;
            // Flat directions (the free azimuth of an untilted trap) are
            // left alone.
            if c > 1e-9 {
                u[i] += (-g / c).clamp(-0.1, 0.1);
            }
        }
        let g = gradient(&mut e, u, h)?;
        let flat = |i: usize| curvature[i].abs() <= 1e-9;
        if (0..5).all(|i| flat(i) || g[i].abs() < options.gradient_tolerance) {
            return Ok(Polish {
                gradient: g,
                curvature,
                converged: true,
            });
        }
    }
    let g = gradient(&mut e, u, h)?;
    Ok(Polish {
        gradient: g,
        curvature,
        converged: false,
    })
}

/// The last few objective values, enough to see how the descent stalled.
fn tail(trace: &[f64]) -> Vec<f64> {
    trace[trace.len().saturating_sub(32)..].to_vec()
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Simplex descent from `initial` followed by a coordinate-wise quadratic
/// polish.
pub fn find_equilibrium(model: &TrapModel, initial: &Configuration, options: &EquilibriumOptions) -> Result<Equilibrium> {
    model.check_inside(initial)?;
    let scales = Scales::of(model)?;
    let gamma = initial.gamma;
    let mut objective = Objective::new(model, scales, gamma, options.replan_distance);
    let mut trace = Vec::new();
    let mut u = scales.scale(initial);
    if !objective.value(&u).is_finite() {
        return Err(Error::Domain(
            "initial configuration is too close to the boundary for the mesh resolution".into(),
        ));
    }

    let mut last = f64::INFINITY;
    let mut converged = false;
    for _ in 0..MAX_RESTARTS {
        let budget = options.max_evaluations.saturating_sub(objective.evaluations);
        let mut f = |p: &[f64; 5]| objective.value(p);
        let r = nelder_mead(&mut f, u, SIMPLEX_STEPS, budget, &mut trace);
        u = r.best;
        if !r.converged {
            break;
        }
        // A restart that cannot improve confirms the minimum.
        if last - r.value <= 1e-8 {
            converged = true;
            break;
        }
        last = r.value;
    }
    if !converged {
        return Err(Error::Convergence {
            iterations: trace.len(),
            message: format!("simplex descent exhausted {} evaluations", objective.evaluations),
            trace: tail(&trace),
        });
    }

    let mut evaluations = objective.evaluations;
    let mut result = None;
    for _ in 0..4 {
        let cfg = scales.unscale(&u, gamma);
        let local = model.local(&cfg)?;
        let p = polish(&local, scales, gamma, &mut u, options, &mut evaluations)?;
        let moved = (scales.unscale(&u, gamma).position() - local.reference()).norm();
        if p.converged && moved <= options.replan_distance * scales.length {
            result = Some(p);
            break;
        }
        if !p.converged {
            return Err(Error::Convergence {
                iterations: options.max_polish_sweeps,
                message: format!("quadratic polish left a scaled gradient of {:?}", p.gradient),
                trace: tail(&trace),
            });
        }
    }
    let p = result.ok_or_else(|| Error::Convergence {
        iterations: 4,
        message: "polish kept drifting away from its quadrature plan".into(),
        trace: tail(&trace),
    })?;
    if p.curvature.iter().any(|&c| c < -1e-6) {
        return Err(Error::UnstableEquilibrium {
            eigenvalues: p.curvature.iter().map(|c| c * scales.energy).collect(),
        });
    }

    u[4] = wrap_angle(u[4]);
    let configuration = scales.unscale(&u, gamma);
    // Surfaces under-resolution diagnostics for the final point.
    let energy = model.full_potential(&configuration)?;
    Ok(Equilibrium {
        configuration,
        energy,
        gradient: std::array::from_fn(|i| p.gradient[i] * scales.energy / scales.coordinate(i)),
        evaluations,
    })
}
