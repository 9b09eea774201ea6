//! CPW transmission-line design on a layered substrate.
//!
//! The model chain: a two-layer wafer average gives the substrate
//! permittivity; zero-thickness conformal mapping gives the effective
//! permittivity and the geometric line constants; the quarter-wave relation
//! gives the design frequency; and comparison with a measured fundamental
//! extracts kinetic inductance, characteristic impedance and distributed
//! resistance.
//!
//! Public inputs and outputs use convenient bench units (μm, GHz, μH/m,
//! nF/m, Ω/m); conversion to SI happens inside each routine.

use crate::constants::{C_VACUUM, EPSILON_0, MU_0};
use crate::numerics::ellip_k;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from design-input validation and extraction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CpwError {
    #[error("wafer stack invalid: {0}")]
    InvalidStack(&'static str),
    #[error("cpw geometry invalid: {0}")]
    InvalidGeometry(&'static str),
    #[error("f_measured = {f_measured_ghz} GHz exceeds f_design = {f_design_ghz} GHz (kinetic inductance would be negative)")]
    MeasuredAboveDesign { f_design_ghz: f64, f_measured_ghz: f64 },
    #[error("frequency must be positive, got {0} GHz")]
    NonPositiveFrequency(f64),
    #[error("quality factor must be positive, got {0}")]
    NonPositiveQ(f64),
}

/// Two-layer wafer description (substrate plus epitaxial alloy layer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaferStack {
    /// Si substrate thickness, μm.
    pub d_si_um: f64,
    /// SiGe layer thickness, μm.
    pub d_sige_um: f64,
    /// Relative permittivity of Si.
    pub eps_si: f64,
    /// Ge mole fraction of the alloy layer, in `[0, 1]`.
    pub ge_fraction: f64,
}

impl WaferStack {
    pub fn new(d_si_um: f64, d_sige_um: f64, eps_si: f64, ge_fraction: f64) -> Result<Self, CpwError> {
        if !(d_si_um > 0.0) || !d_si_um.is_finite() {
            return Err(CpwError::InvalidStack("d_si must be positive"));
        }
        if !(d_sige_um >= 0.0) || !d_sige_um.is_finite() {
            return Err(CpwError::InvalidStack("d_sige must be non-negative"));
        }
        if !(eps_si > 1.0) || !eps_si.is_finite() {
            return Err(CpwError::InvalidStack("eps_si must exceed 1"));
        }
        if !(0.0..=1.0).contains(&ge_fraction) {
            return Err(CpwError::InvalidStack("ge_fraction must lie in [0, 1]"));
        }
        Ok(WaferStack { d_si_um, d_sige_um, eps_si, ge_fraction })
    }

    /// Alloy permittivity, linear in the Ge fraction: `eps_si + 4.5 x`.
    pub fn eps_sige(&self) -> f64 {
        self.eps_si + 4.5 * self.ge_fraction
    }

    /// Total wafer thickness, μm.
    pub fn total_thickness_um(&self) -> f64 {
        self.d_si_um + self.d_sige_um
    }
}

/// Planar CPW cross-section and resonator length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpwGeometry {
    /// Center-conductor width, μm.
    pub w_um: f64,
    /// Gap between center conductor and ground, μm.
    pub g_um: f64,
    /// Resonator length, μm.
    pub length_um: f64,
    /// Total wafer thickness below the metal, μm.
    pub d_um: f64,
}

impl CpwGeometry {
    pub fn new(w_um: f64, g_um: f64, length_um: f64, d_um: f64) -> Result<Self, CpwError> {
        for (v, name) in [
            (w_um, "w must be positive"),
            (g_um, "g must be positive"),
            (length_um, "length must be positive"),
            (d_um, "wafer thickness must be positive"),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CpwError::InvalidGeometry(name));
            }
        }
        Ok(CpwGeometry { w_um, g_um, length_um, d_um })
    }
}

/// Moduli of the conformal map and the resulting permittivity weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConformalMapFactors {
    pub k: f64,
    pub k_prime: f64,
    pub k3: f64,
    pub k3_prime: f64,
    /// Filling weight `K(k') K(k3) / (K(k) K(k3'))`.
    pub k_tilde: f64,
}

/// One full design/extraction row.
///
/// `lk`, `z_eff` and `r` are only present when the corresponding measured
/// quantities were supplied; absent fields stay out of serialized records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionLineParams {
    pub eps_sub: f64,
    pub eps_eff: f64,
    pub lg_uh_per_m: f64,
    pub cg_nf_per_m: f64,
    pub f_design_ghz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_measured_ghz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lk_uh_per_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_eff_ohm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_ohm_per_m: Option<f64>,
}

/// Thickness-weighted wafer permittivity (two-layer average).
pub fn substrate_permittivity(stack: &WaferStack) -> f64 {
    let num = stack.d_si_um * stack.eps_si + stack.d_sige_um * stack.eps_sige();
    num / (stack.d_si_um + stack.d_sige_um)
}

/// Conformal-map moduli for a CPW of width `w`, gap `g` over a wafer of
/// thickness `d`.
///
/// ```text
///   k  = w / (w + 2g)
///   k3 = tanh(pi w / 4d) / tanh(pi (w + 2g) / 4d)
/// ```
///
/// Both moduli lie in `(0, 1)` for any valid geometry, so the elliptic
/// integrals below are always defined.
pub fn conformal_factors(geom: &CpwGeometry) -> ConformalMapFactors {
    let k = geom.w_um / (geom.w_um + 2.0 * geom.g_um);
    let q = std::f64::consts::PI / (4.0 * geom.d_um);
    let mut k3 = (q * geom.w_um).tanh() / (q * (geom.w_um + 2.0 * geom.g_um)).tanh();
    if k3 >= 1.0 {
        // Both tanh saturate when d is hundreds of times thinner than the
        // trace; step back to the largest representable modulus < 1 so the
        // thin-wafer limit eps_eff -> eps_sub is approached smoothly.
        k3 = f64::from_bits(1.0_f64.to_bits() - 1);
    }
    let k_prime = ((1.0 - k) * (1.0 + k)).sqrt();
    let k3_prime = ((1.0 - k3) * (1.0 + k3)).sqrt();
    let kk = ellip_k(k).expect("k in (0,1) by geometry invariants");
    let kkp = ellip_k(k_prime).expect("k' in (0,1) by geometry invariants");
    let kk3 = ellip_k(k3).expect("k3 in (0,1) by geometry invariants");
    let kk3p = ellip_k(k3_prime).expect("k3' in (0,1) by geometry invariants");
    let k_tilde = (kkp * kk3) / (kk * kk3p);
    ConformalMapFactors { k, k_prime, k3, k3_prime, k_tilde }
}

/// Effective permittivity of the vacuum-topped CPW: the substrate fills
/// half the field volume, weighted by the conformal factor.
pub fn effective_permittivity(eps_sub: f64, factors: &ConformalMapFactors) -> f64 {
    (1.0 + eps_sub * factors.k_tilde) / (1.0 + factors.k_tilde)
}

/// Geometric inductance and capacitance per length, `(μH/m, nF/m)`.
///
/// ```text
///   lg = mu0 K(k') / (4 K(k))          cg = 4 eps0 eps_eff K(k) / K(k')
/// ```
///
/// The product `lg cg = mu0 eps0 eps_eff` holds exactly; it is the phase
/// velocity identity the design frequency relies on.
pub fn geometric_line_params(factors: &ConformalMapFactors, eps_eff: f64) -> (f64, f64) {
    let kk = ellip_k(factors.k).expect("modulus in (0,1)");
    let kkp = ellip_k(factors.k_prime).expect("modulus in (0,1)");
    let lg = MU_0 * kkp / (4.0 * kk);
    let cg = 4.0 * EPSILON_0 * eps_eff * kk / kkp;
    (lg * 1e6, cg * 1e9)
}

/// Quarter-wave design frequency in GHz for a resonator of length `L` μm.
pub fn design_frequency(length_um: f64, eps_eff: f64) -> f64 {
    let length_m = length_um * 1e-6;
    C_VACUUM / (eps_eff.sqrt() * 4.0 * length_m) / 1e9
}

/// Kinetic inductance per length (μH/m) from the measured fundamental.
///
/// The phase velocity scales as `1/sqrt((lg + lk) cg)`, so the frequency
/// ratio fixes the inductance ratio:
///
/// ```text
///   lk = lg [ (f_design / f_measured)^2 - 1 ]
/// ```
///
/// # Errors
///
/// `f_measured` must be positive and must not exceed `f_design`; a faster
/// line than the geometric design would need negative kinetic inductance.
pub fn extract_kinetic_inductance(
    f_design_ghz: f64,
    f_measured_ghz: f64,
    lg_uh_per_m: f64,
) -> Result<f64, CpwError> {
    if !(f_measured_ghz > 0.0) {
        return Err(CpwError::NonPositiveFrequency(f_measured_ghz));
    }
    if f_measured_ghz > f_design_ghz {
        return Err(CpwError::MeasuredAboveDesign { f_design_ghz, f_measured_ghz });
    }
    let ratio = f_design_ghz / f_measured_ghz;
    Ok(lg_uh_per_m * (ratio * ratio - 1.0))
}

/// Characteristic impedance `sqrt((lk + lg)/cg)` in Ω from per-length
/// constants in μH/m and nF/m.
pub fn characteristic_impedance(lk_uh_per_m: f64, lg_uh_per_m: f64, cg_nf_per_m: f64) -> f64 {
    (((lk_uh_per_m + lg_uh_per_m) * 1e-6) / (cg_nf_per_m * 1e-9)).sqrt()
}

/// Distributed resistance `z_eff / (qi L)` in Ω/m for a resonator of
/// length `L` μm.
pub fn extract_resistance(z_eff_ohm: f64, qi: f64, length_um: f64) -> Result<f64, CpwError> {
    if !(qi > 0.0) {
        return Err(CpwError::NonPositiveQ(qi));
    }
    Ok(z_eff_ohm / (qi * length_um * 1e-6))
}

/// Produce one full design row, optionally extended with the quantities
/// extracted from a measured fundamental and internal quality factor.
///
/// `lk` and `z_eff` require `f_measured_ghz`; `r` additionally requires
/// `qi`.
pub fn design_report(
    stack: &WaferStack,
    geom: &CpwGeometry,
    f_measured_ghz: Option<f64>,
    qi: Option<f64>,
) -> Result<TransmissionLineParams, CpwError> {
    let eps_sub = substrate_permittivity(stack);
    let factors = conformal_factors(geom);
    let eps_eff = effective_permittivity(eps_sub, &factors);
    let (lg, cg) = geometric_line_params(&factors, eps_eff);
    let f_design = design_frequency(geom.length_um, eps_eff);

    let mut report = TransmissionLineParams {
        eps_sub,
        eps_eff,
        lg_uh_per_m: lg,
        cg_nf_per_m: cg,
        f_design_ghz: f_design,
        f_measured_ghz: None,
        lk_uh_per_m: None,
        z_eff_ohm: None,
        r_ohm_per_m: None,
    };
    if let Some(fm) = f_measured_ghz {
        let lk = extract_kinetic_inductance(f_design, fm, lg)?;
        let z = characteristic_impedance(lk, lg, cg);
        report.f_measured_ghz = Some(fm);
        report.lk_uh_per_m = Some(lk);
        report.z_eff_ohm = Some(z);
        if let Some(q) = qi {
            report.r_ohm_per_m = Some(extract_resistance(z, q, geom.length_um)?);
        }
    }
    Ok(report)
}
