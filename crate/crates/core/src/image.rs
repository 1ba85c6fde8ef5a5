//! Closed-form model of a point dipole above an infinite superconducting
//! plane, solved with a mirror image dipole.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, Error, Result};
use crate::model::{MagnetParticle, PhysicalConstants};

/// Equilibrium and small-oscillation constants for the plane geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneEquilibrium {
    pub z0: f64,
    pub k_z: f64,
    pub k_beta: f64,
    pub omega_z: f64,
    pub omega_beta: f64,
    /// Mass [kg] and inertia [kg·m²] the frequencies were computed with.
    pub mass: f64,
    pub inertia: f64,
}

impl PlaneEquilibrium {
    pub fn f_z(&self) -> f64 {
        self.omega_z / (2.0 * PI)
    }

    pub fn f_beta(&self) -> f64 {
        self.omega_beta / (2.0 * PI)
    }
}

/// Prefactor μ0μ²/(64π) of the magnetic image energy.
pub(crate) fn image_coefficient(particle: &MagnetParticle, c: &PhysicalConstants) -> f64 {
    c.mu0 * particle.dipole().powi(2) / (64.0 * PI)
}

/// U(z, β) = μ0μ²(1 + sin²β)/(64π z³) + m g z.
pub fn image_potential(z: f64, beta: f64, particle: &MagnetParticle, c: &PhysicalConstants) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!(
            "image potential is singular at the plane; height must be > 0, got {z}"
        )));
    }
    let s = beta.sin();
    Ok(image_coefficient(particle, c) * (1.0 + s * s) / z.powi(3) + particle.mass() * c.g * z)
}

pub fn equilibrium_height(particle: &MagnetParticle, c: &PhysicalConstants) -> Result<f64> {
    if particle.dipole() <= 0.0 {
        return Err(Error::DegenerateTrap(
            "zero dipole moment: no Meissner repulsion, the particle cannot levitate".into(),
        ));
    }
    Ok((3.0 * c.mu0 * particle.dipole().powi(2) / (64.0 * PI * particle.mass() * c.g)).powf(0.25))
}

/// Spring constants are the analytic second derivatives of the image
/// potential at (z0, 0): k_z = 12C/z0⁵, k_β = 2C/z0³.
pub fn plane_mode_frequencies(particle: &MagnetParticle, c: &PhysicalConstants) -> Result<PlaneEquilibrium> {
    let z0 = equilibrium_height(particle, c)?;
    let coeff = image_coefficient(particle, c);
    let k_z = 12.0 * coeff / z0.powi(5);
    let k_beta = 2.0 * coeff / z0.powi(3);
    Ok(PlaneEquilibrium {
        z0,
        k_z,
        k_beta,
        omega_z: (k_z / particle.mass()).sqrt(),
        omega_beta: (k_beta / particle.inertia()).sqrt(),
        mass: particle.mass(),
        inertia: particle.inertia(),
    })
}

/// Sphere radius from the product of the z and β angular frequencies;
/// independent of density and magnetization.
pub fn radius_from_frequencies(omega_z: f64, omega_beta: f64, c: &PhysicalConstants) -> Result<f64> {
    if !(omega_z > 0.0 && omega_beta > 0.0) {
        return Err(Error::Domain(format!(
            "frequencies must be > 0, got ω_z={omega_z}, ω_β={omega_beta}"
        )));
    }
    Ok((20.0f64 / 3.0).sqrt() * c.g / (omega_z * omega_beta))
}

/// Equipartition rms amplitude sqrt(k_B T / k).
pub fn thermal_rms(temperature: f64, stiffness: f64, c: &PhysicalConstants) -> Result<f64> {
    require_non_negative("temperature", temperature)?;
    if !(stiffness > 0.0) {
        return Err(Error::Domain(format!("stiffness must be > 0, got {stiffness}")));
    }
    Ok((c.k_b * temperature / stiffness).sqrt())
}
