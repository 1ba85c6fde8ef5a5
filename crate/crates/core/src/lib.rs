//! Simulation and analysis toolkit for a ferromagnetic microsphere levitated
//! above a type-I superconductor.

// `!(x > 0.0)` is the NaN-rejecting form used throughout for validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dissipation;
pub mod dynamics;
pub mod error;
pub mod image;
pub mod magnetostatics;
pub mod model;
pub mod noise;
pub mod records;
pub mod table;

pub use error::{Error, Result};
pub use model::{Configuration, Environment, MagnetParticle, ModeLabel, PhysicalConstants, TrapSystem};
