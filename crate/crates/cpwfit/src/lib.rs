//! Design and measurement analysis for coplanar-waveguide superconducting resonators.
//!
//! The crate covers the full chain from wafer stack to extracted loss
//! parameters:
//!
//! * [`cpw`]: conformal-mapping design of CPW transmission lines on layered
//!   substrates (effective permittivity, line constants, kinetic inductance
//!   and series resistance extraction).
//! * [`s21`]: the notch-type resonator forward model with environment terms
//!   (amplitude, global phase, cable delay) and deterministic synthetic
//!   trace generation.
//! * [`notchfit`]: calibration-free fitting of measured S21 traces (cable
//!   delay estimation, algebraic circle fit, phase fit, joint refinement)
//!   with parameter uncertainties.
//! * [`photon`]: conversion from VNA drive power to intra-resonator photon
//!   number via the steady-state energy balance.
//! * [`loss`]: two-level-system loss model, power/temperature fits of
//!   internal quality factors, and the resonator relaxation-time bound.
//! * [`ingest`]: strict parsers for trace files (CSV and Touchstone) and
//!   sweep manifests.
//! * [`numerics`]: the small numerical kernels the above are built on
//!   (complete elliptic integrals, circle fitting, Levenberg-Marquardt).
//!
//! All public interfaces use SI units unless a field name carries an
//! explicit unit suffix (`_um`, `_ghz`, `_uh_per_m`, ...).

// Validation deliberately writes `!(x > 0.0)` so NaN fails the check;
// the matrix kernels in `numerics` index with ranges on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constants;
pub mod cpw;
pub mod ingest;
pub mod loss;
pub mod notchfit;
pub mod numerics;
pub mod photon;
pub mod s21;
