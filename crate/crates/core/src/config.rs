//! Scenario files: TOML with [particle], [trap], [environment] and
//! [constants] sections. Units are part of every key name. Sections and
//! keys are only required by the commands that use them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dissipation::PressureModel;
use crate::error::{Error, Result};
use crate::magnetostatics::MeshOptions;
use crate::model::{Environment, MagnetParticle, PhysicalConstants, TrapSystem, AMU, PA_PER_MBAR};

/// Environment variable naming the default scenario file.
pub const CONFIG_ENV: &str = "TRAPSIM_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSection {
    pub radius_um: Option<f64>,
    pub density_kg_m3: Option<f64>,
    pub remanence_t: Option<f64>,
    pub conductivity_s_m: Option<f64>,
    pub chi_imag: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub well_radius_mm: Option<f64>,
    pub well_depth_mm: Option<f64>,
    pub tilt_deg: Option<f64>,
    pub tilt_azimuth_deg: Option<f64>,
    pub panels: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub t_cold_k: Option<f64>,
    pub t_warm_k: Option<f64>,
    pub pressure_warm_mbar: Option<f64>,
    pub gas_mass_amu: Option<f64>,
    pub tube_radius_mm: Option<f64>,
    /// Rows of (warm, cold) pressure, replacing the low-pressure limit.
    pub pressure_table_mbar: Option<Vec<[f64; 2]>>,
    /// Decay rate of unmodelled channels.
    pub residual_rate_per_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub mu0_t_m_per_a: Option<f64>,
    pub g_m_s2: Option<f64>,
    pub k_b_j_per_k: Option<f64>,
    pub hbar_j_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub particle: Option<ParticleSection>,
    pub trap: Option<TrapSection>,
    pub environment: Option<EnvironmentSection>,
    pub constants: Option<ConstantsSection>,
}

/// Where a scenario came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSource {
    pub path: Option<PathBuf>,
    /// SHA-256 of the file contents, hex.
    pub sha256: String,
}

fn missing(section: &str, key: &str) -> Error {
    Error::Config(format!("missing key `{key}` in [{section}]"))
}

fn bad(section: &str, key: &str, e: Error) -> Error {
    Error::Config(format!("[{section}] `{key}`: {e}"))
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, ConfigSource)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let source = ConfigSource {
            path: Some(path.to_path_buf()),
            sha256: hex(&Sha256::digest(text.as_bytes())),
        };
        Ok((cfg, source))
    }

    pub fn constants(&self) -> Result<PhysicalConstants> {
        let d = PhysicalConstants::default();
        let s = self.constants.clone().unwrap_or_default();
        let c = PhysicalConstants {
            mu0: s.mu0_t_m_per_a.unwrap_or(d.mu0),
            g: s.g_m_s2.unwrap_or(d.g),
            k_b: s.k_b_j_per_k.unwrap_or(d.k_b),
            hbar: s.hbar_j_s.unwrap_or(d.hbar),
        };
        c.validate().map_err(|e| Error::Config(format!("[constants]: {e}")))?;
        Ok(c)
    }

    pub fn particle(&self) -> Result<MagnetParticle> {
        let s = self.particle.as_ref().ok_or_else(|| Error::Config("missing section [particle]".into()))?;
        let radius = s.radius_um.ok_or_else(|| missing("particle", "radius_um"))?;
        let density = s.density_kg_m3.ok_or_else(|| missing("particle", "density_kg_m3"))?;
        let remanence = s.remanence_t.ok_or_else(|| missing("particle", "remanence_t"))?;
        let mu0 = self.constants()?.mu0;
        MagnetParticle::with_mu0(radius * 1e-6, density, remanence, mu0)
            .map_err(|e| Error::Config(format!("[particle]: {e}")))?
            .with_conductivity(s.conductivity_s_m.unwrap_or(0.0))
            .map_err(|e| bad("particle", "conductivity_s_m", e))?
            .with_chi_imag(s.chi_imag.unwrap_or(0.0))
            .map_err(|e| bad("particle", "chi_imag", e))
    }

    pub fn trap(&self) -> Result<TrapSystem> {
        let s = self.trap.as_ref().ok_or_else(|| Error::Config("missing section [trap]".into()))?;
        let radius = s.well_radius_mm.ok_or_else(|| missing("trap", "well_radius_mm"))?;
        let depth = s.well_depth_mm.ok_or_else(|| missing("trap", "well_depth_mm"))?;
        TrapSystem::new(self.particle()?, radius * 1e-3, depth * 1e-3)
            .map_err(|e| Error::Config(format!("[trap]: {e}")))?
            .with_tilt_azimuth(s.tilt_azimuth_deg.unwrap_or(0.0).to_radians())
            .with_tilt(s.tilt_deg.unwrap_or(0.0).to_radians())
            .map_err(|e| bad("trap", "tilt_deg", e))
    }

    pub fn mesh(&self) -> MeshOptions {
        match self.trap.as_ref().and_then(|t| t.panels) {
            Some(n) => MeshOptions::with_panels(n),
            None => MeshOptions::default(),
        }
    }

    /// Missing keys take the defaults of [`Environment`].
    pub fn environment(&self) -> Result<Environment> {
        let d = Environment::default();
        let s = self.environment.clone().unwrap_or_default();
        let env = Environment {
            t_cold: s.t_cold_k.unwrap_or(d.t_cold),
            t_warm: s.t_warm_k.unwrap_or(d.t_warm),
            p_warm: s.pressure_warm_mbar.map_or(d.p_warm, |p| p * PA_PER_MBAR),
            gas_mass: s.gas_mass_amu.map_or(d.gas_mass, |m| m * AMU),
            tube_radius: s.tube_radius_mm.map_or(d.tube_radius, |r| r * 1e-3),
        };
        env.validate().map_err(|e| Error::Config(format!("[environment]: {e}")))?;
        Ok(env)
    }

    pub fn pressure_model(&self) -> PressureModel {
        match self.environment.as_ref().and_then(|e| e.pressure_table_mbar.as_ref()) {
            Some(rows) => PressureModel::Table(rows.iter().map(|r| (r[0] * PA_PER_MBAR, r[1] * PA_PER_MBAR)).collect()),
            None => PressureModel::LowPressureLimit,
        }
    }

    pub fn residual_rate(&self) -> f64 {
        self.environment.as_ref().and_then(|e| e.residual_rate_per_s).unwrap_or(0.0)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
