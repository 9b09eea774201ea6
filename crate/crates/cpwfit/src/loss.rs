//! Power- and temperature-dependent loss model for superconducting
//! resonators, and a fitter for extracting its parameters from swept
//! internal-quality-factor data.
//!
//! The internal loss is modelled as a saturable two-level-system (TLS)
//! channel on top of a power-independent residual:
//!
//! ```text
//!   1/Qi(n, T) = 1/q0 + (1/q_tls0) tanh(h fr / 2 kB T) / (1 + n/n_c)^beta
//! ```
//!
//! `q_tls0` is the low-power, low-temperature TLS quality factor, `n_c`
//! the critical photon number where saturation sets in, `beta` the
//! saturation exponent, and `q0` collects all non-TLS loss. An optional
//! additive hook lets callers stack an extra temperature-dependent
//! channel (e.g. quasiparticles) on top when evaluating the model; the
//! fitter itself fits the hook-free form.

use crate::constants::{BOLTZMANN_K, PLANCK_H};
use crate::numerics::{least_squares, LeastSquaresOptions, LeastSquaresReport};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("invalid TLS parameters: {0}")]
    InvalidParams(&'static str),
    #[error("observation {index} is invalid: {reason}")]
    InvalidObservation { index: usize, reason: &'static str },
    #[error("need at least {need} observations to fit 4 parameters, got {got}")]
    TooFewObservations { got: usize, need: usize },
}

/// Parameters of the TLS + residual loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsFitParams {
    pub q_tls0: f64,
    pub n_c: f64,
    pub beta: f64,
    pub q0: f64,
}

impl TlsFitParams {
    /// All parameters must be positive and finite; `beta` must lie in
    /// (0, 2] (above 2 the saturation is steeper than any reported TLS
    /// ensemble and the fit is rejected as unphysical).
    pub fn validate(&self) -> Result<(), LossError> {
        let positive = [self.q_tls0, self.n_c, self.beta, self.q0];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(LossError::InvalidParams("all parameters must be positive and finite"));
        }
        if self.beta > 2.0 {
            return Err(LossError::InvalidParams("beta must lie in (0, 2]"));
        }
        Ok(())
    }
}

/// One point of a power/temperature sweep: photon number, stage
/// temperature, resonance frequency, and the measured internal quality
/// factor with optional 1-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossObservation {
    pub n_ph: f64,
    pub temperature_k: f64,
    pub fr_hz: f64,
    pub qi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qi_sigma: Option<f64>,
}

impl LossObservation {
    fn validate(&self, index: usize) -> Result<(), LossError> {
        let bad = |reason| Err(LossError::InvalidObservation { index, reason });
        if !(self.n_ph >= 0.0) || !self.n_ph.is_finite() {
            return bad("n_ph must be non-negative and finite");
        }
        if !(self.temperature_k > 0.0) || !self.temperature_k.is_finite() {
            return bad("temperature_k must be positive");
        }
        if !(self.fr_hz > 0.0) || !self.fr_hz.is_finite() {
            return bad("fr_hz must be positive");
        }
        if !(self.qi > 0.0) || !self.qi.is_finite() {
            return bad("qi must be positive");
        }
        if let Some(s) = self.qi_sigma {
            if !(s > 0.0) || !s.is_finite() {
                return bad("qi_sigma must be positive when present");
            }
        }
        Ok(())
    }
}

/// TLS contribution to the inverse internal quality factor.
///
/// At `t_k = 0` the thermal factor saturates to 1 (the `tanh` argument
/// overflows to infinity and `tanh` returns exactly 1), so the zero-
/// temperature limit needs no special casing.
pub fn tls_inverse_q(params: &TlsFitParams, n_ph: f64, t_k: f64, fr_hz: f64) -> f64 {
    debug_assert!(t_k >= 0.0 && n_ph >= 0.0 && fr_hz > 0.0);
    let thermal = (PLANCK_H * fr_hz / (2.0 * BOLTZMANN_K * t_k)).tanh();
    thermal / ((1.0 + n_ph / params.n_c).powf(params.beta) * params.q_tls0)
}

/// Total internal quality factor: TLS channel, power-independent
/// residual, and an optional additive inverse-Q hook evaluated at `t_k`.
pub fn total_qi(
    params: &TlsFitParams,
    n_ph: f64,
    t_k: f64,
    fr_hz: f64,
    qp_hook: Option<&dyn Fn(f64) -> f64>,
) -> f64 {
    let mut inv = 1.0 / params.q0 + tls_inverse_q(params, n_ph, t_k, fr_hz);
    if let Some(hook) = qp_hook {
        inv += hook(t_k);
    }
    1.0 / inv
}

/// Energy-decay bound on usable pulse length: `T = ql / (2 pi fr)`,
/// in seconds.
pub fn relaxation_bound(ql: f64, fr_hz: f64) -> f64 {
    ql / (std::f64::consts::TAU * fr_hz)
}

/// Parameter uncertainties from the fit covariance, same fields and
/// units as [`TlsFitParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsFitSigma {
    pub q_tls0: f64,
    pub n_c: f64,
    pub beta: f64,
    pub q0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlsFitReport {
    pub params: TlsFitParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<TlsFitSigma>,
    pub converged: bool,
    /// Set when the observations span fewer than 1.5 decades in photon
    /// number; the saturation parameters are then poorly constrained and
    /// the result should be treated as indicative only.
    pub ill_conditioned: bool,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Number of decades spanned by the positive photon numbers.
fn photon_span_decades(obs: &[LossObservation]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for o in obs {
        if o.n_ph > 0.0 {
            lo = lo.min(o.n_ph);
            hi = hi.max(o.n_ph);
        }
    }
    if hi > 0.0 && lo.is_finite() { (hi / lo).log10() } else { 0.0 }
}

/// Internal fit workspace: observations flattened into columns, with the
/// thermal tanh factors (parameter-independent) precomputed.
struct FitData {
    n_ph: Vec<f64>,
    thermal: Vec<f64>,
    inv_qi: Vec<f64>,
    weight: Vec<f64>,
}

impl FitData {
    fn new(obs: &[LossObservation]) -> Self {
        // Weight by the inverse standard deviation of 1/qi. Only applied
        // when every observation carries an uncertainty; a mixed sweep
        // falls back to unweighted so no point is silently dropped.
        let all_sigma = obs.iter().all(|o| o.qi_sigma.is_some());
        FitData {
            n_ph: obs.iter().map(|o| o.n_ph).collect(),
            thermal: obs
                .iter()
                .map(|o| (PLANCK_H * o.fr_hz / (2.0 * BOLTZMANN_K * o.temperature_k)).tanh())
                .collect(),
            inv_qi: obs.iter().map(|o| 1.0 / o.qi).collect(),
            weight: obs
                .iter()
                .map(|o| if all_sigma { o.qi * o.qi / o.qi_sigma.unwrap() } else { 1.0 })
                .collect(),
        }
    }

    /// Weighted residuals in inverse-Q space at packed parameters
    /// `u = [ln q_tls0, ln n_c, ln q0, beta]`. The log parameterization
    /// keeps the quality factors positive and evens out curvatures that
    /// differ by orders of magnitude.
    fn residuals(&self, u: &[f64]) -> Vec<f64> {
        let inv_qtls = (-u[0]).exp();
        let n_c = u[1].exp();
        let inv_q0 = (-u[2]).exp();
        let beta = u[3];
        self.n_ph
            .iter()
            .zip(&self.thermal)
            .zip(&self.inv_qi)
            .zip(&self.weight)
            .map(|(((n, th), y), w)| {
                w * (inv_q0 + inv_qtls * th / (1.0 + n / n_c).powf(beta) - y)
            })
            .collect()
    }

    /// Best (1/q0, 1/q_tls0) for fixed (n_c, beta) by weighted linear
    /// least squares on `y = c0 + c1 g`, plus the resulting cost.
    /// Returns `None` when either coefficient comes out non-positive.
    fn profile(&self, ln_nc: f64, beta: f64) -> Option<(f64, f64, f64)> {
        let n_c = ln_nc.exp();
        let (mut s00, mut s01, mut s11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((n, th), (y, w)) in self
            .n_ph
            .iter()
            .zip(&self.thermal)
            .zip(self.inv_qi.iter().zip(&self.weight))
        {
            let g = th / (1.0 + n / n_c).powf(beta);
            let w2 = w * w;
            s00 += w2;
            s01 += w2 * g;
            s11 += w2 * g * g;
            b0 += w2 * y;
            b1 += w2 * g * y;
        }
        let det = s00 * s11 - s01 * s01;
        if det.abs() < 1e-300 {
            return None;
        }
        let c0 = (s11 * b0 - s01 * b1) / det;
        let c1 = (s00 * b1 - s01 * b0) / det;
        if !(c0 > 0.0) || !(c1 > 0.0) {
            return None;
        }
        let cost: f64 = self
            .n_ph
            .iter()
            .zip(&self.thermal)
            .zip(self.inv_qi.iter().zip(&self.weight))
            .map(|((n, th), (y, w))| {
                let r = w * (c0 + c1 * th / (1.0 + n / n_c).powf(beta) - y);
                r * r
            })
            .sum();
        Some((c0, c1, cost))
    }
}

const BETA_BOUNDS: (f64, f64) = (1e-3, 2.0);

fn pack(p: &TlsFitParams) -> [f64; 4] {
    [p.q_tls0.ln(), p.n_c.ln(), p.q0.ln(), p.beta]
}

fn unpack(u: &[f64]) -> TlsFitParams {
    TlsFitParams { q_tls0: u[0].exp(), n_c: u[1].exp(), q0: u[2].exp(), beta: u[3] }
}

fn run_lm(data: &FitData, start: [f64; 4]) -> LeastSquaresReport {
    let bounds = [
        (f64::NEG_INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        BETA_BOUNDS,
    ];
    least_squares(
        |u| data.residuals(u),
        &start,
        Some(&bounds),
        &LeastSquaresOptions::default(),
    )
}

/// Coarse grid search over the nonlinear pair (ln n_c, beta) with the
/// linear pair profiled out. The TLS cost surface has long curved
/// valleys where a single default start can stall; seeding from the best
/// grid cell makes the refinement reliable across the whole physical
/// parameter range.
fn profile_scan_start(data: &FitData) -> Option<[f64; 4]> {
    const LN_NC: (f64, f64, usize) = (-11.512925464970229, 11.512925464970229, 41); // ln 1e-5 .. ln 1e5
    const BETA: (f64, f64, usize) = (0.02, 1.6, 33);
    let mut best: Option<([f64; 4], f64)> = None;
    for i in 0..LN_NC.2 {
        let ln_nc = LN_NC.0 + (LN_NC.1 - LN_NC.0) * i as f64 / (LN_NC.2 - 1) as f64;
        for j in 0..BETA.2 {
            let beta = BETA.0 + (BETA.1 - BETA.0) * j as f64 / (BETA.2 - 1) as f64;
            if let Some((c0, c1, cost)) = data.profile(ln_nc, beta) {
                if best.is_none_or(|(_, c)| cost < c) {
                    best = Some(([-(c1.ln()), ln_nc, -(c0.ln()), beta], cost));
                }
            }
        }
    }
    best.map(|(u, _)| u)
}

/// Fit the TLS + residual loss model to a power/temperature sweep.
///
/// Residuals are formed in inverse-Q space, weighted by `qi^2/qi_sigma`
/// (the inverse standard deviation of `1/qi`) when every observation
/// carries an uncertainty. When no starting point is supplied, the fit
/// is run both from the documented default (`q0 = max qi`,
/// `q_tls0 = 3 q0`, `n_c = 1`, `beta = 0.3`) and from a profiled grid
/// scan over `(n_c, beta)`, keeping the lower-cost result.
///
/// # Errors
///
/// * [`LossError::TooFewObservations`] below 8 points (4 parameters
///   leave no meaningful redundancy before that).
/// * [`LossError::InvalidObservation`] for non-physical entries.
/// * [`LossError::InvalidParams`] for an invalid explicit start.
pub fn fit_tls(
    observations: &[LossObservation],
    initial: Option<&TlsFitParams>,
) -> Result<TlsFitReport, LossError> {
    const MIN_OBS: usize = 8;
    if observations.len() < MIN_OBS {
        return Err(LossError::TooFewObservations { got: observations.len(), need: MIN_OBS });
    }
    for (i, o) in observations.iter().enumerate() {
        o.validate(i)?;
    }
    let data = FitData::new(observations);
    let ill_conditioned = photon_span_decades(observations) < 1.5;

    let report = match initial {
        Some(p) => {
            p.validate()?;
            run_lm(&data, pack(p))
        }
        None => {
            let q0 = observations.iter().map(|o| o.qi).fold(0.0, f64::max);
            let default = TlsFitParams { q_tls0: 3.0 * q0, n_c: 1.0, beta: 0.3, q0 };
            let mut best = run_lm(&data, pack(&default));
            if let Some(start) = profile_scan_start(&data) {
                let scanned = run_lm(&data, start);
                if scanned.residual_norm < best.residual_norm {
                    best = scanned;
                }
            }
            best
        }
    };

    let params = unpack(&report.parameters);
    // Delta method for the log-parameterized entries: sigma_q = q sigma_ln q.
    let sigma = report.covariance.as_ref().map(|cov| {
        let sd = |i: usize| cov[i][i].max(0.0).sqrt();
        TlsFitSigma {
            q_tls0: params.q_tls0 * sd(0),
            n_c: params.n_c * sd(1),
            beta: sd(3),
            q0: params.q0 * sd(2),
        }
    });
    let converged = report.converged && params.validate().is_ok();
    Ok(TlsFitReport {
        params,
        sigma,
        converged,
        ill_conditioned,
        residual_norm: report.residual_norm,
        iterations: report.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Fitted values for the 5.04 GHz resonator on the thick-buffer wafer.
    const S1_FR1: TlsFitParams = TlsFitParams { q_tls0: 5703.0, n_c: 0.32, beta: 0.16, q0: 946.0 };

    #[test]
    fn tls_channel_reference_value() {
        let got = tls_inverse_q(&S1_FR1, 1.0, 0.05, 5.04e9);
        assert!((got / 1.375_765_529_59e-4 - 1.0).abs() < 1e-9, "got {got}");
        // The two factors behind it.
        let arg = PLANCK_H * 5.04e9 / (2.0 * BOLTZMANN_K * 0.05);
        assert!((arg - 2.418_818_508_98).abs() < 1e-9);
        assert!((arg.tanh() - 0.984_273_126_687).abs() < 1e-10);
        assert!(((1.0 + 1.0 / 0.32f64).powf(0.16) - 1.254_491_816_1).abs() < 1e-9);
    }

    #[test]
    fn zero_temperature_zero_power_limit() {
        // tanh saturates to exactly 1 and the saturation factor to
        // exactly 1, so the channel floor is exactly 1/q_tls0.
        assert_eq!(tls_inverse_q(&S1_FR1, 0.0, 0.0, 5.04e9), 1.0 / 5703.0);
    }

    #[test]
    fn high_temperature_limit_vanishes() {
        assert!(tls_inverse_q(&S1_FR1, 0.0, 1e12, 5.04e9) < 1e-15);
    }

    #[test]
    fn saturated_tanh_matches_zero_temperature() {
        // h fr / 2 kB T > 20 leaves tanh within 1e-9 of 1.
        let t = PLANCK_H * 5.04e9 / (2.0 * BOLTZMANN_K * 21.0);
        let cold = tls_inverse_q(&S1_FR1, 3.0, t, 5.04e9);
        let zero = tls_inverse_q(&S1_FR1, 3.0, 0.0, 5.04e9);
        assert!((cold / zero - 1.0).abs() < 1e-9);
    }

    #[test]
    fn total_qi_reference_values() {
        let lo = total_qi(&S1_FR1, 1.0, 0.05, 5.04e9, None);
        let hi = total_qi(&S1_FR1, 100.0, 0.05, 5.04e9, None);
        assert!((lo / 837.058_939_403 - 1.0).abs() < 1e-9, "Qi(1) = {lo}");
        assert!((hi / 888.188_963_264 - 1.0).abs() < 1e-9, "Qi(100) = {hi}");
        assert!(hi > lo);
    }

    #[test]
    fn tls_free_limit_is_q0() {
        let p = TlsFitParams { q_tls0: 1e300, ..S1_FR1 };
        let qi = total_qi(&p, 1.0, 0.05, 5.04e9, None);
        assert!((qi / S1_FR1.q0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn qp_hook_adds_loss() {
        let hook = |t: f64| 1e-4 * t;
        let with = total_qi(&S1_FR1, 1.0, 0.3, 5.04e9, Some(&hook));
        let without = total_qi(&S1_FR1, 1.0, 0.3, 5.04e9, None);
        assert!(with < without);
        let expect = 1.0 / (1.0 / without + 3e-5);
        assert!((with / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_photon_number() {
        let mut prev = 0.0;
        for k in 0..40 {
            let n = 10f64.powf(-3.0 + 7.0 * k as f64 / 39.0);
            let qi = total_qi(&S1_FR1, n, 0.05, 5.04e9, None);
            assert!(qi > prev);
            assert!(qi <= S1_FR1.q0);
            prev = qi;
        }
    }

    #[test]
    fn relaxation_bound_values() {
        assert!((relaxation_bound(488.0, 5.04e9) / 15.410_241e-9 - 1.0).abs() < 1e-6);
        assert!((relaxation_bound(488.0, 5.57e9) / 13.943_916e-9 - 1.0).abs() < 1e-6);
        assert!((relaxation_bound(552.0, 5.04e9) / 17.431_256e-9 - 1.0).abs() < 1e-6);
        assert!((relaxation_bound(552.0, 5.57e9) / 15.772_626e-9 - 1.0).abs() < 1e-6);
        assert!((relaxation_bound(std::f64::consts::TAU, 1.0) - 1.0).abs() < 1e-15);
    }

    fn sweep(params: &TlsFitParams, temps_mk: &[f64]) -> Vec<LossObservation> {
        let mut obs = Vec::new();
        for &t_mk in temps_mk {
            for k in 0..25 {
                let n = 10f64.powf(-3.0 + 7.0 * k as f64 / 24.0);
                let qi = total_qi(params, n, t_mk * 1e-3, 5.04e9, None);
                obs.push(LossObservation {
                    n_ph: n,
                    temperature_k: t_mk * 1e-3,
                    fr_hz: 5.04e9,
                    qi,
                    qi_sigma: Some(0.01 * qi),
                });
            }
        }
        obs
    }

    #[test]
    fn noise_free_recovery_is_exact() {
        let obs = sweep(&S1_FR1, &[50.0, 100.0, 200.0, 300.0, 400.0]);
        let report = fit_tls(&obs, None).unwrap();
        assert!(report.converged);
        assert!(!report.ill_conditioned);
        let p = report.params;
        assert!((p.q_tls0 / S1_FR1.q_tls0 - 1.0).abs() < 1e-3, "q_tls0 = {}", p.q_tls0);
        assert!((p.n_c / S1_FR1.n_c - 1.0).abs() < 1e-3, "n_c = {}", p.n_c);
        assert!((p.beta / S1_FR1.beta - 1.0).abs() < 1e-3, "beta = {}", p.beta);
        assert!((p.q0 / S1_FR1.q0 - 1.0).abs() < 1e-3, "q0 = {}", p.q0);
        assert!(report.sigma.is_some());
    }

    #[test]
    fn explicit_start_near_truth_converges() {
        let obs = sweep(&S1_FR1, &[50.0]);
        let start = TlsFitParams { q_tls0: 5000.0, n_c: 0.5, beta: 0.2, q0: 900.0 };
        let report = fit_tls(&obs, Some(&start)).unwrap();
        assert!(report.converged);
        assert!((report.params.q0 / S1_FR1.q0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn too_few_observations_rejected() {
        let obs = sweep(&S1_FR1, &[50.0]);
        assert!(matches!(
            fit_tls(&obs[..7], None),
            Err(LossError::TooFewObservations { got: 7, need: 8 })
        ));
    }

    #[test]
    fn narrow_power_span_flagged() {
        let mut obs = sweep(&S1_FR1, &[50.0]);
        for o in &mut obs {
            o.n_ph = 1.0;
            o.qi = total_qi(&S1_FR1, 1.0, 0.05, 5.04e9, None);
        }
        let report = fit_tls(&obs, None).unwrap();
        assert!(report.ill_conditioned);
    }

    #[test]
    fn invalid_observation_rejected() {
        let mut obs = sweep(&S1_FR1, &[50.0]);
        obs[3].temperature_k = 0.0;
        assert!(matches!(
            fit_tls(&obs, None),
            Err(LossError::InvalidObservation { index: 3, .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(S1_FR1.validate().is_ok());
        assert!(TlsFitParams { beta: 2.5, ..S1_FR1 }.validate().is_err());
        assert!(TlsFitParams { n_c: 0.0, ..S1_FR1 }.validate().is_err());
        assert!(TlsFitParams { q0: f64::NAN, ..S1_FR1 }.validate().is_err());
    }
}
