//! Physical constants (SI, exact 2019 definitions).

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Bohr magneton over Planck constant, Hz/T.
pub const BOHR_MAGNETON_HZ_PER_T: f64 = 13.996_245_49e9;

/// `h·f / k_B` in kelvin for a frequency in Hz.
#[inline]
pub fn frequency_to_kelvin(freq_hz: f64) -> f64 {
    PLANCK * freq_hz / BOLTZMANN
}
