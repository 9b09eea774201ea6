//! Intra-resonator photon-number calibration from VNA drive settings and
//! fitted quality factors.
//!
//! On resonance a notch resonator transmits `|S21|^2 = (1 - ql/qc)^2` of
//! the incident power and reflects `|S11|^2 = (ql/qc)^2`; the remainder is
//! dissipated in the resonator. The steady-state energy balance then gives
//! the average photon number `n_ph = qi p_loss / (hbar omega^2)`.

use crate::constants::HBAR;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhotonError {
    #[error("quality factors and frequency must be positive, p_in non-negative: {0}")]
    InvalidInput(&'static str),
    #[error("ql = {ql} exceeds qc_mag = {qc_mag}: dissipated power would be negative")]
    Overcoupled { ql: f64, qc_mag: f64 },
}

/// Input-power bookkeeping: `p_in = p_vna + p_att` (attenuation enters as
/// a negative dB contribution).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerContext {
    pub p_vna_dbm: f64,
    pub p_att_db: f64,
    pub p_in_dbm: f64,
    pub p_in_watts: f64,
}

/// Combine VNA output power with total line attenuation.
pub fn input_power(p_vna_dbm: f64, p_att_db: f64) -> PowerContext {
    let p_in_dbm = p_vna_dbm + p_att_db;
    PowerContext {
        p_vna_dbm,
        p_att_db,
        p_in_dbm,
        p_in_watts: 10f64.powf((p_in_dbm - 30.0) / 10.0),
    }
}

/// Power split on resonance and the resulting photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonCalc {
    /// `|S21|^2` on resonance: `(1 - ql/qc_mag)^2`.
    pub s21_res_power_ratio: f64,
    /// `|S11|^2` on resonance: `(ql/qc_mag)^2`.
    pub s11_res_power_ratio: f64,
    /// Power dissipated in the resonator, W.
    pub p_loss_watts: f64,
    /// Average intra-resonator photon number.
    pub n_ph: f64,
}

/// Average photon number for a resonator driven on resonance with
/// `p_in_watts` at the chip.
///
/// ```text
///   p_loss = p_in (1 - |S21|^2 - |S11|^2)
///   n_ph   = qi p_loss / (hbar omega^2),   omega = 2 pi fr
/// ```
///
/// The mismatch angle does not enter; only `qc_mag` is used.
///
/// # Errors
///
/// * [`PhotonError::InvalidInput`] for non-positive quality factors or
///   frequency, or negative/non-finite power.
/// * [`PhotonError::Overcoupled`] when `ql > qc_mag`, which would make the
///   dissipated power negative.
pub fn photon_number(
    ql: f64,
    qc_mag: f64,
    qi: f64,
    fr_hz: f64,
    p_in_watts: f64,
) -> Result<PhotonCalc, PhotonError> {
    if !(ql > 0.0) || !(qc_mag > 0.0) || !(qi > 0.0) {
        return Err(PhotonError::InvalidInput("quality factor <= 0"));
    }
    if !(fr_hz > 0.0) {
        return Err(PhotonError::InvalidInput("fr <= 0"));
    }
    if !(p_in_watts >= 0.0) || !p_in_watts.is_finite() {
        return Err(PhotonError::InvalidInput("p_in < 0 or non-finite"));
    }
    if ql > qc_mag {
        return Err(PhotonError::Overcoupled { ql, qc_mag });
    }
    let x = ql / qc_mag;
    let s21 = (1.0 - x) * (1.0 - x);
    let s11 = x * x;
    let p_loss = p_in_watts * (1.0 - s21 - s11);
    let omega = std::f64::consts::TAU * fr_hz;
    let n_ph = qi * p_loss / (HBAR * omega * omega);
    Ok(PhotonCalc { s21_res_power_ratio: s21, s11_res_power_ratio: s11, p_loss_watts: p_loss, n_ph })
}
