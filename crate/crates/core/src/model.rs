//! Shared domain types: constants, the levitated particle, the trap and the
//! generalized coordinates. Everything is SI internally.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, Error, Result};

/// CODATA 2018 vacuum permeability [T·m/A].
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Boltzmann constant [J/K].
pub const K_B: f64 = 1.380_649e-23;
/// Reduced Planck constant [J·s].
pub const HBAR: f64 = 1.054_571_817e-34;
/// Standard gravity used throughout unless overridden [m/s²].
pub const G_DEFAULT: f64 = 9.81;
/// Unified atomic mass unit [kg].
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Mass of a helium-4 atom [kg].
pub const HELIUM_MASS: f64 = 6.646_477e-27;
/// Pascal per millibar.
pub const PA_PER_MBAR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub mu0: f64,
    pub g: f64,
    pub k_b: f64,
    pub hbar: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            mu0: MU0,
            g: G_DEFAULT,
            k_b: K_B,
            hbar: HBAR,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        require_positive("mu0", self.mu0)?;
        require_positive("g", self.g)?;
        require_positive("k_b", self.k_b)?;
        require_positive("hbar", self.hbar)
    }
}

/// A homogeneous magnetized sphere. Derived quantities are cached at
/// construction and never change afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetParticle {
    radius: f64,
    density: f64,
    remanence: f64,
    conductivity: f64,
    chi_imag: f64,
    volume: f64,
    mass: f64,
    inertia: f64,
    dipole: f64,
}

impl MagnetParticle {
    /// `radius` [m], `density` [kg/m³], `remanence` is μ0·M [T].
    pub fn new(radius: f64, density: f64, remanence: f64) -> Result<Self> {
        Self::with_mu0(radius, density, remanence, MU0)
    }

    pub fn with_mu0(radius: f64, density: f64, remanence: f64, mu0: f64) -> Result<Self> {
        require_positive("radius", radius)?;
        require_positive("density", density)?;
        require_non_negative("remanence", remanence)?;
        require_positive("mu0", mu0)?;
        let volume = 4.0 / 3.0 * PI * radius.powi(3);
        let mass = density * volume;
        Ok(Self {
            radius,
            density,
            remanence,
            conductivity: 0.0,
            chi_imag: 0.0,
            volume,
            mass,
            inertia: 0.4 * mass * radius * radius,
            dipole: remanence / mu0 * volume,
        })
    }

    /// Electrical conductivity [S/m].
    pub fn with_conductivity(mut self, sigma: f64) -> Result<Self> {
        require_non_negative("conductivity", sigma)?;
        self.conductivity = sigma;
        Ok(self)
    }

    /// Imaginary part of the magnetic susceptibility.
    pub fn with_chi_imag(mut self, chi_imag: f64) -> Result<Self> {
        require_non_negative("chi_imag", chi_imag)?;
        self.chi_imag = chi_imag;
        Ok(self)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn density(&self) -> f64 {
        self.density
    }
    /// μ0·M [T].
    pub fn remanence(&self) -> f64 {
        self.remanence
    }
    pub fn conductivity(&self) -> f64 {
        self.conductivity
    }
    pub fn chi_imag(&self) -> f64 {
        self.chi_imag
    }
    pub fn volume(&self) -> f64 {
        self.volume
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    /// Moment of inertia about any diameter [kg·m²].
    pub fn inertia(&self) -> f64 {
        self.inertia
    }
    /// Magnitude of the permanent dipole moment [A·m²].
    pub fn dipole(&self) -> f64 {
        self.dipole
    }
}

/// Convenience constructor mirroring the operation name used by the CLI.
pub fn derive_particle(radius: f64, density: f64, remanence: f64) -> Result<MagnetParticle> {
    MagnetParticle::new(radius, density, remanence)
}

/// Cylindrical well cut into a superconducting block, possibly tilted
/// with respect to gravity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSystem {
    pub well_radius: f64,
    pub well_depth: f64,
    /// Tilt of the trap axis away from vertical [rad].
    pub tilt: f64,
    /// Horizontal unit vector (trap frame) along which the tilt is applied;
    /// gravity gains a component `g·sin(tilt)` along it.
    pub tilt_axis: [f64; 2],
    pub particle: MagnetParticle,
}

impl TrapSystem {
    pub fn new(particle: MagnetParticle, well_radius: f64, well_depth: f64) -> Result<Self> {
        let trap = Self {
            well_radius,
            well_depth,
            tilt: 0.0,
            tilt_axis: [1.0, 0.0],
            particle,
        };
        trap.validate()?;
        Ok(trap)
    }

    pub fn with_tilt(mut self, tilt: f64) -> Result<Self> {
        self.tilt = tilt;
        self.validate()?;
        Ok(self)
    }

    /// Sets the tilt direction from its azimuth in the horizontal plane.
    pub fn with_tilt_azimuth(mut self, azimuth: f64) -> Self {
        self.tilt_axis = [azimuth.cos(), azimuth.sin()];
        self
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("well_radius", self.well_radius)?;
        require_positive("well_depth", self.well_depth)?;
        if !(self.tilt.is_finite() && self.tilt.abs() < PI / 2.0) {
            return Err(Error::invalid("tilt", format!("|tilt| must be < π/2, got {}", self.tilt)));
        }
        let n = (self.tilt_axis[0].powi(2) + self.tilt_axis[1].powi(2)).sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("tilt_axis", format!("must be a unit vector, norm {n}")));
        }
        Ok(())
    }

    /// Unit vector of the local "up" direction (opposite to gravity) in the
    /// trap frame.
    pub fn up(&self) -> Vector3<f64> {
        let (s, c) = self.tilt.sin_cos();
        Vector3::new(-s * self.tilt_axis[0], -s * self.tilt_axis[1], c)
    }
}

/// Generalized coordinates of the rigid sphere. γ is carried along but has
/// no stiffness and never enters any computation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub beta: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Configuration {
    pub fn new(x: f64, y: f64, z: f64, beta: f64, alpha: f64) -> Self {
        Self {
            x,
            y,
            z,
            beta,
            alpha,
            gamma: 0.0,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    /// Unit vector along the dipole moment: β is the elevation above the
    /// horizontal plane, α the azimuth.
    pub fn orientation(&self) -> Vector3<f64> {
        let (sb, cb) = self.beta.sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        Vector3::new(cb * ca, cb * sa, sb)
    }

    /// The five dynamical coordinates (x, y, z, β, α).
    pub fn coords(&self) -> [f64; 5] {
        [self.x, self.y, self.z, self.beta, self.alpha]
    }

    pub fn from_coords(q: [f64; 5], gamma: f64) -> Self {
        Self {
            x: q[0],
            y: q[1],
            z: q[2],
            beta: q[3],
            alpha: q[4],
            gamma,
        }
    }
}

/// Thermodynamic state of the residual gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub t_cold: f64,
    pub t_warm: f64,
    /// Pressure read at the warm gauge [Pa].
    pub p_warm: f64,
    pub gas_mass: f64,
    /// Radius of the tube connecting the cold chamber to the gauge [m].
    /// Only consumed by user-supplied thermomolecular tables.
    pub tube_radius: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            t_cold: 4.2,
            t_warm: 293.0,
            p_warm: 0.0,
            gas_mass: HELIUM_MASS,
            tube_radius: 0.97e-2,
        }
    }
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        require_positive("t_cold", self.t_cold)?;
        require_positive("t_warm", self.t_warm)?;
        require_non_negative("p_warm", self.p_warm)?;
        require_positive("gas_mass", self.gas_mass)?;
        require_non_negative("tube_radius", self.tube_radius)
    }
}

/// Rigid-body mode labels; γ is deliberately absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeLabel {
    X,
    Y,
    Z,
    Beta,
    Alpha,
}

impl ModeLabel {
    pub const ALL: [ModeLabel; 5] = [
        ModeLabel::X,
        ModeLabel::Y,
        ModeLabel::Z,
        ModeLabel::Beta,
        ModeLabel::Alpha,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_translational(self) -> bool {
        matches!(self, ModeLabel::X | ModeLabel::Y | ModeLabel::Z)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeLabel::X => "x",
            ModeLabel::Y => "y",
            ModeLabel::Z => "z",
            ModeLabel::Beta => "beta",
            ModeLabel::Alpha => "alpha",
        }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(ModeLabel::X),
            "y" => Ok(ModeLabel::Y),
            "z" => Ok(ModeLabel::Z),
            "beta" | "b" | "β" => Ok(ModeLabel::Beta),
            "alpha" | "a" | "α" => Ok(ModeLabel::Alpha),
            other => Err(Error::invalid("mode", format!("unknown mode label `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn paper_particle_mass_and_moment() {
        let p = MagnetParticle::new(30.1e-6, 7430.0, 0.71).unwrap();
        assert_relative_eq!(p.mass(), 8.49e-10, max_relative = 2e-3);
        assert_relative_eq!(p.dipole(), 6.45e-8, max_relative = 2e-3);
    }

    #[test]
    fn unit_normalization() {
        let p = MagnetParticle::new(1.0, 3.0 / (4.0 * PI), 0.0).unwrap();
        assert_relative_eq!(p.mass(), 1.0, max_relative = 1e-15);
        assert_eq!(p.dipole(), 0.0);
    }

    #[test]
    fn inertia_of_optical_radius() {
        let p = MagnetParticle::new(27e-6, 7430.0, 0.71).unwrap();
        let expected = 0.4 * 7430.0 * 4.0 / 3.0 * PI * 27e-6f64.powi(5);
        assert_relative_eq!(p.inertia(), expected, max_relative = 1e-14);
        assert_relative_eq!(p.inertia(), 1.79e-19, max_relative = 3e-3);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(MagnetParticle::new(0.0, 1.0, 1.0).is_err());
        assert!(MagnetParticle::new(1.0, -1.0, 1.0).is_err());
        assert!(MagnetParticle::new(1.0, 1.0, -0.1).is_err());
        assert!(MagnetParticle::new(f64::NAN, 1.0, 0.1).is_err());
    }

    #[test]
    fn orientation_convention() {
        let c = Configuration::new(0.0, 0.0, 1.0, 0.0, PI / 2.0);
        let o = c.orientation();
        assert!(o.x.abs() < 1e-15 && (o.y - 1.0).abs() < 1e-15 && o.z.abs() < 1e-15);
        let c = Configuration::new(0.0, 0.0, 1.0, PI / 2.0, 0.0);
        assert!((c.orientation().z - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tilt_rotates_up_vector() {
        let p = MagnetParticle::new(30e-6, 7430.0, 0.71).unwrap();
        let t = TrapSystem::new(p, 2e-3, 4e-3).unwrap().with_tilt(0.1).unwrap();
        let up = t.up();
        assert_relative_eq!(up.norm(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(up.x, -(0.1f64).sin(), max_relative = 1e-15);
        assert!(TrapSystem::new(p, 2e-3, 4e-3).unwrap().with_tilt(2.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn doubling_radius_scales_power_laws(a in 1e-6f64..1e-3, rho in 100.0f64..2e4, b in 0.0f64..1.5) {
            let p1 = MagnetParticle::new(a, rho, b).unwrap();
            let p2 = MagnetParticle::new(2.0 * a, rho, b).unwrap();
            proptest::prop_assert!((p2.mass() / p1.mass() - 8.0).abs() < 1e-12);
            proptest::prop_assert!((p2.inertia() / p1.inertia() - 32.0).abs() < 1e-11);
            if b > 0.0 {
                proptest::prop_assert!((p2.dipole() / p1.dipole() - 8.0).abs() < 1e-12);
            }
        }
    }
}
