//! Equilibria, normal modes, nonlinear frequency shifts and ringdown
//! synthesis.

pub mod equilibrium;
pub mod modes;
pub mod nonlinear;
pub mod ringdown;
pub mod sweep;

pub use equilibrium::{find_equilibrium, Equilibrium, EquilibriumOptions};
pub use modes::{mode_spectrum, modes_from_hessian, Mode, ModeOptions, ModeSpectrum, Provenance};
pub use nonlinear::{frequency_shift, nonlinear_coefficients, ode_frequency_oracle, FrequencyShift, NonlinearCoefficients, NonlinearMode};
pub use ringdown::{synthesize_ringdown, RingdownSpec};
pub use sweep::{default_start, relative_variation, tilt_sweep, write_sweep_csv, SweepPoint, SWEEP_HEADER};
