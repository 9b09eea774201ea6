//! Physical constants (CODATA 2018 exact values where defined).

/// Speed of light in vacuum, m/s.
pub const C_VACUUM: f64 = 299_792_458.0;

/// Vacuum magnetic permeability, H/m.
pub const MU_0: f64 = 1.256_637_062_12e-6;

/// Vacuum electric permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Planck constant, J s.
pub const PLANCK_H: f64 = 6.626_070_15e-34;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K.
pub const BOLTZMANN_K: f64 = 1.380_649e-23;
