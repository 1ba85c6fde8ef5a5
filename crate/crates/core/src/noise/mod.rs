//! Spectra, peak and ringdown fitting, and sensitivity figures.

pub mod demod;
pub mod lorentzian;
pub mod psd;
pub mod sensing;

pub use demod::{demodulate, fit_exponential_ringdown, fit_frequency_vs_amplitude, DemodOptions, FrequencyShiftFit, RingdownFit};
pub use lorentzian::{fit_lorentzian, lorentzian_model, LorentzianErrors, LorentzianFit, LorentzianOptions, LorentzianParams, Residuals};
pub use psd::{estimate_psd, integrated_power, synthesize_thermal_process, ProcessSpec, WelchOptions};
pub use sensing::{calibrate_torque, sensitivity_report, thermal_torque_psd, ModeQ, ModeSensitivity, SensitivityReport, TorqueSource};
