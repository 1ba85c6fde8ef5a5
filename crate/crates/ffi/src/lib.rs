//! C ABI over the trapsim toolkit.
//!
//! Every function returns a [`TrapsimStatus`]; results come back through
//! out-pointers. On failure a message is kept per thread and can be read
//! with [`trapsim_last_error`]. Handles are opaque and must be released
//! with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use trapsim::dissipation::{fit_damping_vs_pressure, gas_damping, mean_thermal_velocity, q_from_ringdown, DampingPoint, GasDampingKind};
use trapsim::dynamics::{default_start, find_equilibrium, mode_spectrum, EquilibriumOptions, ModeOptions};
use trapsim::image::{plane_mode_frequencies, radius_from_frequencies};
use trapsim::magnetostatics::{MeshOptions, SolverOptions, TrapModel};
use trapsim::model::HELIUM_MASS;
use trapsim::noise::{fit_lorentzian, LorentzianOptions};
use trapsim::records::SpectrumRecord;
use trapsim::{Error, MagnetParticle, ModeLabel, PhysicalConstants, TrapSystem};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrapsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Domain = 3,
    Solver = 4,
    Convergence = 5,
    Fit = 6,
    Data = 7,
    Panic = 8,
    /// Reserved for failures outside the categories above.
    Other = 9,
}

/// A magnetized sphere.
pub struct TrapsimParticle(MagnetParticle);

/// A meshed trap with its factorized boundary operator.
pub struct TrapsimModel(TrapModel);

/// Image-method equilibrium over an infinite plane, SI units and Hz.
#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
pub struct TrapsimPlane {
    pub z0: f64,
    pub k_z: f64,
    pub k_beta: f64,
    pub f_z: f64,
    pub f_beta: f64,
}

/// Equilibrium coordinates and mode frequencies in (x, y, z, β, α) order.
/// Neutral modes report 0 Hz.
#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
pub struct TrapsimModes {
    pub equilibrium: [f64; 5],
    pub frequency: [f64; 5],
}

#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
pub struct TrapsimLorentzian {
    pub a0: f64,
    pub a1: f64,
    pub f0: f64,
    pub q: f64,
    /// Standard errors; infinite when a parameter is unconstrained.
    pub a0_se: f64,
    pub a1_se: f64,
    pub f0_se: f64,
    pub q_se: f64,
    pub bins_used: usize,
}

/// 1/τ = c[0] + c[1]·P + c[2]·P², P in Pa. Unused entries are 0.
#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
pub struct TrapsimPolyFit {
    pub order: usize,
    pub coefficients: [f64; 3],
    pub standard_errors: [f64; 3],
    pub rss: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TrapsimStatus {
    match e {
        Error::InvalidParameter { .. } | Error::Config(_) => TrapsimStatus::InvalidParameter,
        Error::Domain(_) | Error::DegenerateTrap(_) | Error::Singularity(_) | Error::UnstableEquilibrium { .. } => TrapsimStatus::Domain,
        Error::SolverFailure { .. } | Error::NumericalDifferentiation(_) | Error::IntegratorAccuracy { .. } => TrapsimStatus::Solver,
        Error::Convergence { .. } => TrapsimStatus::Convergence,
        Error::Fit { .. } => TrapsimStatus::Fit,
        Error::Data(_) | Error::InvalidTable(_) | Error::Io { .. } => TrapsimStatus::Data,
        Error::AtTilt { source, .. } => status_of(source),
    }
}

/// Runs `f` with panics and errors turned into status codes.
fn guard(f: impl FnOnce() -> Result<(), TrapsimStatus>) -> TrapsimStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TrapsimStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            TrapsimStatus::Panic
        }
    }
}

fn check<T>(r: trapsim::Result<T>) -> Result<T, TrapsimStatus> {
    r.map_err(|e| {
        let s = status_of(&e);
        set_error(e.to_string());
        s
    })
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), TrapsimStatus> {
    if p.is_null() {
        set_error(format!("`{name}` is null"));
        Err(TrapsimStatus::NullPointer)
    } else {
        Ok(())
    }
}

/// Copies the last error message of this thread into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length, or
/// 0 if there is none.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn trapsim_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// `radius` [m], `density` [kg/m³], `remanence` μ0M [T], `conductivity`
/// [S/m], `chi_imag` dimensionless.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn trapsim_particle_new(
    radius: f64,
    density: f64,
    remanence: f64,
    conductivity: f64,
    chi_imag: f64,
    out: *mut *mut TrapsimParticle,
) -> TrapsimStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = check(MagnetParticle::new(radius, density, remanence).and_then(|p| p.with_conductivity(conductivity)?.with_chi_imag(chi_imag)))?;
        *out = Box::into_raw(Box::new(TrapsimParticle(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`trapsim_particle_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn trapsim_particle_free(p: *mut TrapsimParticle) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Mass [kg], moment of inertia [kg·m²] and dipole moment [A·m²].
///
/// # Safety
/// `p` must be a live handle; the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn trapsim_particle_derived(p: *const TrapsimParticle, mass: *mut f64, inertia: *mut f64, dipole: *mut f64) -> TrapsimStatus {
    guard(|| {
        non_null(p, "particle")?;
        non_null(mass, "mass")?;
        non_null(inertia, "inertia")?;
        non_null(dipole, "dipole")?;
        let p = &(*p).0;
        *mass = p.mass();
        *inertia = p.inertia();
        *dipole = p.dipole();
        Ok(())
    })
}

/// # Safety
/// `p` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn trapsim_plane_equilibrium(p: *const TrapsimParticle, out: *mut TrapsimPlane) -> TrapsimStatus {
    guard(|| {
        non_null(p, "particle")?;
        non_null(out, "out")?;
        let eq = check(plane_mode_frequencies(&(*p).0, &PhysicalConstants::default()))?;
        *out = TrapsimPlane {
            z0: eq.z0,
            k_z: eq.k_z,
            k_beta: eq.k_beta,
            f_z: eq.f_z(),
            f_beta: eq.f_beta(),
        };
        Ok(())
    })
}

/// Radius [m] from measured f_z and f_β [Hz].
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn trapsim_radius_from_frequencies(f_z: f64, f_beta: f64, out: *mut f64) -> TrapsimStatus {
    guard(|| {
        non_null(out, "out")?;
        let two_pi = 2.0 * std::f64::consts::PI;
        *out = check(radius_from_frequencies(two_pi * f_z, two_pi * f_beta, &PhysicalConstants::default()))?;
        Ok(())
    })
}

/// Builds and factorizes the trap. Lengths in m, `tilt` in rad; `panels`
/// of 0 selects the default mesh.
///
/// # Safety
/// `p` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn trapsim_model_new(
    p: *const TrapsimParticle,
    well_radius: f64,
    well_depth: f64,
    tilt: f64,
    panels: usize,
    out: *mut *mut TrapsimModel,
) -> TrapsimStatus {
    guard(|| {
        non_null(p, "particle")?;
        non_null(out, "out")?;
        let trap = check(TrapSystem::new((*p).0, well_radius, well_depth).and_then(|t| t.with_tilt(tilt)))?;
        let mesh = if panels == 0 { MeshOptions::default() } else { MeshOptions::with_panels(panels) };
        let model = check(TrapModel::new(trap, PhysicalConstants::default(), &mesh, SolverOptions::default()))?;
        *out = Box::into_raw(Box::new(TrapsimModel(model)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from [`trapsim_model_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn trapsim_model_free(m: *mut TrapsimModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Equilibrium search from the axis followed by the normal-mode analysis.
///
/// # Safety
/// `m` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn trapsim_model_solve(m: *const TrapsimModel, out: *mut TrapsimModes) -> TrapsimStatus {
    guard(|| {
        non_null(m, "model")?;
        non_null(out, "out")?;
        let model = &(*m).0;
        let start = check(default_start(model))?;
        let eq = check(find_equilibrium(model, &start, &EquilibriumOptions::default()))?;
        let s = check(mode_spectrum(model, &eq.configuration, &ModeOptions::default()))?;
        let mut r = TrapsimModes {
            equilibrium: eq.configuration.coords(),
            ..Default::default()
        };
        for l in ModeLabel::ALL {
            r.frequency[l.index()] = s.frequency(l);
        }
        *out = r;
        Ok(())
    })
}

/// Helium gas damping rate [1/s] at cold-side `pressure` [Pa] and
/// `temperature` [K]; `rotational` selects the rotational prefactor.
///
/// # Safety
/// `p` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn trapsim_gas_damping(
    p: *const TrapsimParticle,
    pressure: f64,
    temperature: f64,
    rotational: bool,
    out: *mut f64,
) -> TrapsimStatus {
    guard(|| {
        non_null(p, "particle")?;
        non_null(out, "out")?;
        let v = check(mean_thermal_velocity(temperature, HELIUM_MASS, &PhysicalConstants::default()))?;
        let kind = if rotational { GasDampingKind::Rotational } else { GasDampingKind::Translational };
        *out = check(gas_damping(pressure, &(*p).0, v, kind))?;
        Ok(())
    })
}

/// Q = π f τ.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn trapsim_q_from_ringdown(frequency: f64, tau: f64, out: *mut f64) -> TrapsimStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = check(q_from_ringdown(frequency, tau))?;
        Ok(())
    })
}

/// Lorentzian fit of a one-sided PSD. A band with `band_hi <= band_lo`
/// uses the whole spectrum.
///
/// # Safety
/// `frequency` and `psd` must point to `n` readable values; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn trapsim_fit_lorentzian(
    frequency: *const f64,
    psd: *const f64,
    n: usize,
    exclude_bins: usize,
    band_lo: f64,
    band_hi: f64,
    out: *mut TrapsimLorentzian,
) -> TrapsimStatus {
    guard(|| {
        non_null(frequency, "frequency")?;
        non_null(psd, "psd")?;
        non_null(out, "out")?;
        let s = check(SpectrumRecord::new(slice::from_raw_parts(frequency, n).to_vec(), slice::from_raw_parts(psd, n).to_vec()))?;
        let options = LorentzianOptions {
            exclude_bins,
            band: (band_hi > band_lo).then_some((band_lo, band_hi)),
            ..LorentzianOptions::default()
        };
        let fit = check(fit_lorentzian(&s, &options))?;
        let (p, e) = (fit.params, fit.standard_errors);
        *out = TrapsimLorentzian {
            a0: p.a0,
            a1: p.a1,
            f0: p.f0,
            q: p.q,
            a0_se: e.a0,
            a1_se: e.a1,
            f0_se: e.f0,
            q_se: e.q,
            bins_used: fit.bins_used,
        };
        Ok(())
    })
}

/// Polynomial fit of decay rate against pressure. `sigma` may be null for
/// an unweighted fit.
///
/// # Safety
/// `pressure`, `rate` and (if non-null) `sigma` must point to `n` readable
/// values; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn trapsim_fit_damping(
    pressure: *const f64,
    rate: *const f64,
    sigma: *const f64,
    n: usize,
    order: usize,
    out: *mut TrapsimPolyFit,
) -> TrapsimStatus {
    guard(|| {
        non_null(pressure, "pressure")?;
        non_null(rate, "rate")?;
        non_null(out, "out")?;
        let p = slice::from_raw_parts(pressure, n);
        let r = slice::from_raw_parts(rate, n);
        let s = (!sigma.is_null()).then(|| slice::from_raw_parts(sigma, n));
        let points: Vec<DampingPoint> = (0..n)
            .map(|i| DampingPoint {
                pressure: p[i],
                rate: r[i],
                sigma: s.map(|s| s[i]),
            })
            .collect();
        let fit = check(fit_damping_vs_pressure(&points, order))?;
        let mut o = TrapsimPolyFit {
            order: fit.order,
            rss: fit.rss,
            ..Default::default()
        };
        o.coefficients[..fit.coefficients.len()].copy_from_slice(&fit.coefficients);
        o.standard_errors[..fit.standard_errors.len()].copy_from_slice(&fit.standard_errors);
        *out = o;
        Ok(())
    })
}
