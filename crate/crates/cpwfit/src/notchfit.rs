//! Inverse problem for the notch model: extract resonator and environment
//! parameters from a measured complex trace.
//!
//! The pipeline is the standard circle-fit method. Cable delay is removed
//! first (scalar search minimizing the radial scatter of a circle fit),
//! the resonance circle then gives the geometry, the centered phase gives
//! `(fr, ql)`, the off-resonant point gives the environment, and a final
//! joint least-squares refinement of all seven model parameters against
//! the raw complex data produces the reported values and their covariance.

use crate::numerics::{fit_circle, least_squares, LeastSquaresOptions, NumericsError};
use crate::s21::{notch_s21, ComplexTrace, NotchParams, S21Error};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TAU_2PI: f64 = std::f64::consts::TAU;

/// Errors from the trace-fitting pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NotchFitError {
    #[error("trace has {got} points, need at least {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("no off-resonant baseline: the dip sits inside the outer 10% edge window")]
    NoBaseline,
    #[error("circle stage failed: {0}")]
    Circle(#[from] NumericsError),
    #[error("model stage failed: {0}")]
    Model(#[from] S21Error),
}

/// Quality-of-fit bookkeeping attached to every result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Euclidean norm of the stacked (re, im) residual vector.
    pub residual_norm: f64,
    pub n_points: usize,
    /// False when either the phase stage saw no resonance swing or the
    /// joint refinement hit its iteration cap.
    pub converged: bool,
    /// Iterations used by the joint refinement.
    pub iterations: usize,
}

/// One-sigma uncertainties of the extracted quantities, from the joint
/// refinement covariance (`qi` by linear error propagation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitUncertainties {
    pub fr_hz: f64,
    pub ql: f64,
    pub qc_mag: f64,
    pub phi_rad: f64,
    pub qi: f64,
}

/// Full output of [`fit_notch`].
#[derive(Debug, Clone, PartialEq)]
pub struct NotchFitResult {
    pub params: NotchParams,
    /// Diameter-corrected internal quality factor,
    /// `1/qi = 1/ql - cos(phi)/qc_mag` (exact in the fitted parameters).
    pub qi: f64,
    /// `qi / qc_mag`.
    pub coupling_coefficient: f64,
    /// Absent when the refinement covariance is unavailable.
    pub uncertainties: Option<FitUncertainties>,
    pub diagnostics: FitDiagnostics,
}

/// Flat serialization of a fit result with unit-suffixed keys.
///
/// Sigma fields are omitted when no covariance was available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub fr_hz: f64,
    pub ql: f64,
    pub qc_mag: f64,
    pub phi_rad: f64,
    pub a: f64,
    pub alpha_rad: f64,
    pub tau_s: f64,
    pub qi: f64,
    pub coupling_coefficient: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fr_sigma_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ql_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qc_mag_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_sigma_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qi_sigma: Option<f64>,
    pub residual_norm: f64,
    pub n_points: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl NotchFitResult {
    pub fn to_record(&self) -> FitRecord {
        FitRecord {
            fr_hz: self.params.fr_hz,
            ql: self.params.ql,
            qc_mag: self.params.qc_mag,
            phi_rad: self.params.phi_rad,
            a: self.params.a,
            alpha_rad: self.params.alpha_rad,
            tau_s: self.params.tau_s,
            qi: self.qi,
            coupling_coefficient: self.coupling_coefficient,
            fr_sigma_hz: self.uncertainties.map(|u| u.fr_hz),
            ql_sigma: self.uncertainties.map(|u| u.ql),
            qc_mag_sigma: self.uncertainties.map(|u| u.qc_mag),
            phi_sigma_rad: self.uncertainties.map(|u| u.phi_rad),
            qi_sigma: self.uncertainties.map(|u| u.qi),
            residual_norm: self.diagnostics.residual_norm,
            n_points: self.diagnostics.n_points,
            converged: self.diagnostics.converged,
            iterations: self.diagnostics.iterations,
        }
    }
}

/// Coupling-regime assessment of a completed fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingRegime {
    Reliable,
    Caution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingDiagnostics {
    /// `qi / qc_mag`.
    pub coupling_coefficient: f64,
    /// `sigma_qi / qi` when uncertainties are available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_qi_error: Option<f64>,
    pub regime: CouplingRegime,
}

/// Classify the fit by its coupling coefficient: `qi/qc_mag` within
/// `[0.1, 100]` is the regime where the circle method determines `qi`
/// reliably; outside it the extraction error grows sharply.
pub fn coupling_diagnostics(result: &NotchFitResult) -> CouplingDiagnostics {
    let k = result.coupling_coefficient;
    CouplingDiagnostics {
        coupling_coefficient: k,
        relative_qi_error: result.uncertainties.map(|u| u.qi / result.qi),
        regime: if (0.1..=100.0).contains(&k) {
            CouplingRegime::Reliable
        } else {
            CouplingRegime::Caution
        },
    }
}

/// Estimate the electronic delay of a trace.
///
/// Initial value from the mean linear phase slope of the outer 10% of
/// points on each edge; refined by minimizing the radial scatter of a
/// circle fit to the delay-corrected samples over a bracket of half-width
/// `0.25 / span` (33-point coarse scan, then golden-section).
///
/// # Errors
///
/// * [`NotchFitError::TooFewPoints`] below 32 points.
/// * [`NotchFitError::NoBaseline`] when the trace dips but the minimum
///   sits inside an edge window (resonance not bracketed by baseline).
/// * [`NotchFitError::Circle`] when the delay-corrected samples never
///   form a circle, e.g. a flat delay line with no resonator: at the true
///   delay such a trace collapses to a point.
pub fn estimate_delay(trace: &ComplexTrace) -> Result<f64, NotchFitError> {
    let n = trace.len();
    if n < 32 {
        return Err(NotchFitError::TooFewPoints { got: n, need: 32 });
    }
    let f = trace.frequencies_hz();
    let z = trace.s21();
    let ne = (n / 10).max(3);

    check_baseline(f, z, ne)?;

    // Mean phase slope of the two edges; each edge unwrapped on its own.
    let mut slope_sum = 0.0;
    for range in [0..ne, n - ne..n] {
        let fs = &f[range.clone()];
        let mut ph: Vec<f64> = z[range].iter().map(|v| v.arg()).collect();
        unwrap_phase(&mut ph);
        slope_sum += linear_slope(fs, &ph);
    }
    let tau0 = -0.5 * slope_sum / TAU_2PI;

    let span = trace.span_hz();
    let half = 0.25 / span;
    let (mut lo, mut hi) = (tau0 - half, tau0 + half);

    // Coarse scan.
    let mut best_i = 0usize;
    let mut best_v = f64::INFINITY;
    let coarse = 33usize;
    for i in 0..coarse {
        let t = lo + (hi - lo) * i as f64 / (coarse - 1) as f64;
        let v = circle_scatter(f, z, t)?;
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let step = (hi - lo) / (coarse - 1) as f64;
    let a0 = lo + step * best_i.saturating_sub(1) as f64;
    let b0 = lo + step * (best_i + 1).min(coarse - 1) as f64;
    lo = a0;
    hi = b0;

    // Golden-section refinement.
    let gr = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - gr * (hi - lo);
    let mut d = lo + gr * (hi - lo);
    let mut fc = circle_scatter(f, z, c)?;
    let mut fd = circle_scatter(f, z, d)?;
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = circle_scatter(f, z, c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = circle_scatter(f, z, d)?;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Reject traces whose resonance dip is not bracketed by baseline.
/// Traces without any dip pass through; the circle stage decides their
/// fate (a pure delay line degenerates to a point there).
fn check_baseline(f: &[f64], z: &[Complex64], ne: usize) -> Result<(), NotchFitError> {
    let n = f.len();
    let mag: Vec<f64> = z.iter().map(|v| v.norm()).collect();
    let base = (mag[..ne].iter().sum::<f64>() + mag[n - ne..].iter().sum::<f64>())
        / (2 * ne) as f64;
    let (i_min, min) = mag
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("trace is non-empty");
    if base <= 0.0 {
        return Ok(());
    }
    let depth = (base - min) / base;
    if depth >= 1e-4 && (i_min < ne || i_min >= n - ne) {
        return Err(NotchFitError::NoBaseline);
    }
    Ok(())
}

/// Radial rms scatter of a circle fit to the delay-corrected samples.
fn circle_scatter(f: &[f64], z: &[Complex64], tau: f64) -> Result<f64, NumericsError> {
    let pts: Vec<(f64, f64)> = f
        .iter()
        .zip(z)
        .map(|(&fi, zi)| {
            let r = zi * Complex64::from_polar(1.0, TAU_2PI * fi * tau);
            (r.re, r.im)
        })
        .collect();
    let c = fit_circle(&pts)?;
    let mut sum = 0.0;
    for (x, y) in &pts {
        let d = ((x - c.cx).powi(2) + (y - c.cy).powi(2)).sqrt() - c.radius;
        sum += d * d;
    }
    Ok((sum / pts.len() as f64).sqrt())
}

/// Nearest-branch phase unwrap, sweeping in array order.
fn unwrap_phase(ph: &mut [f64]) {
    for i in 1..ph.len() {
        let d = ph[i] - ph[i - 1];
        ph[i] -= TAU_2PI * (d / TAU_2PI).round();
    }
}

/// Slope of the least-squares line through `(x, y)`.
fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    sxy / sxx
}

/// Result of the centered-phase fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFit {
    pub fr_hz: f64,
    pub ql: f64,
    pub theta0_rad: f64,
    /// False when the solver failed or the fitted phase swing across the
    /// span is below 0.1 rad (no resonance in view).
    pub converged: bool,
    pub iterations: usize,
}

/// Fit `theta(f) = theta0 + 2 atan(2 ql (1 - f/fr))` to the centered,
/// unwrapped phase of the resonance circle.
///
/// `centered_phase_rad` must be unwrapped (no 2 pi jumps); `fr_init_hz`
/// and `ql_init` seed the solver.
///
/// # Panics
///
/// When fewer than 4 samples are given or the lengths differ.
pub fn fit_phase(
    frequencies_hz: &[f64],
    centered_phase_rad: &[f64],
    fr_init_hz: f64,
    ql_init: f64,
) -> PhaseFit {
    let n = frequencies_hz.len();
    assert_eq!(n, centered_phase_rad.len(), "frequency/phase length mismatch");
    assert!(n >= 4, "phase fit needs at least 4 points");
    assert!(fr_init_hz > 0.0 && ql_init > 0.0, "initials must be positive");

    let theta00 = frequencies_hz
        .iter()
        .zip(centered_phase_rad)
        .map(|(&f, &p)| p - 2.0 * (2.0 * ql_init * (1.0 - f / fr_init_hz)).atan())
        .sum::<f64>()
        / n as f64;

    let freqs = frequencies_hz.to_vec();
    let phase = centered_phase_rad.to_vec();
    let residual = move |p: &[f64]| -> Vec<f64> {
        let (fr, ql, th0) = (p[0], p[1], p[2]);
        freqs
            .iter()
            .zip(&phase)
            .map(|(&f, &ph)| th0 + 2.0 * (2.0 * ql * (1.0 - f / fr)).atan() - ph)
            .collect()
    };
    let report = least_squares(
        residual,
        &[fr_init_hz, ql_init, theta00],
        None,
        &LeastSquaresOptions::default(),
    );
    let (fr, ql, th0) = (report.parameters[0], report.parameters[1], report.parameters[2]);

    let swing = {
        let arm = |f: f64| 2.0 * (2.0 * ql * (1.0 - f / fr)).atan();
        (arm(frequencies_hz[0]) - arm(frequencies_hz[n - 1])).abs()
    };
    let ok = report.converged && fr.is_finite() && ql.is_finite() && fr > 0.0 && swing >= 0.1;
    PhaseFit { fr_hz: fr, ql, theta0_rad: th0, converged: ok, iterations: report.iterations }
}

/// Fit the full notch model to a trace.
///
/// Stages: delay removal ([`estimate_delay`]), circle fit, centered-phase
/// fit for `(fr, ql)`, environment from the off-resonant circle point,
/// mismatch angle and `qc_mag` from the normalized circle, and a joint
/// refinement of all seven parameters against the raw complex samples.
/// Reported uncertainties come from the refinement covariance; `qi` error
/// by propagation through `1/qi = 1/ql - cos(phi)/qc_mag`.
///
/// # Errors
///
/// Propagates [`estimate_delay`] errors, circle degeneracy, and an
/// unphysical-`qi` error when the fitted parameters give
/// `1/ql - cos(phi)/qc_mag <= 0`. Non-convergence is NOT an error: it is
/// flagged in the diagnostics and the best-effort parameters are returned.
pub fn fit_notch(trace: &ComplexTrace) -> Result<NotchFitResult, NotchFitError> {
    let tau = estimate_delay(trace)?;
    let f = trace.frequencies_hz();
    let s21 = trace.s21();
    let n = trace.len();

    let z: Vec<Complex64> = f
        .iter()
        .zip(s21)
        .map(|(&fi, zi)| zi * Complex64::from_polar(1.0, TAU_2PI * fi * tau))
        .collect();
    let pts: Vec<(f64, f64)> = z.iter().map(|v| (v.re, v.im)).collect();
    let circle = fit_circle(&pts)?;
    let center = Complex64::new(circle.cx, circle.cy);

    let mut ph: Vec<f64> = z.iter().map(|v| (v - center).arg()).collect();
    unwrap_phase(&mut ph);

    let (fr0, ql0) = phase_fit_initials(f, &z, &ph);
    let pf = fit_phase(f, &ph, fr0, ql0);

    // Off-resonant point: diametrically opposite the resonance on the
    // fitted circle; it carries the environment amplitude and phase.
    let z_inf = center + Complex64::from_polar(circle.radius, pf.theta0_rad + std::f64::consts::PI);
    let a0 = z_inf.norm();
    let alpha0 = z_inf.arg();
    let c_norm = center / z_inf;
    let phi0 = (Complex64::new(1.0, 0.0) - c_norm).arg();
    let qc0 = pf.ql / (2.0 * circle.radius / a0);

    // Joint refinement of the full model against the raw trace.
    let fv = f.to_vec();
    let sv = s21.to_vec();
    let residual = move |p: &[f64]| -> Vec<f64> {
        let m = NotchParams {
            fr_hz: p[0],
            ql: p[1],
            qc_mag: p[2],
            phi_rad: p[3],
            a: p[4],
            alpha_rad: p[5],
            tau_s: p[6],
        };
        let mut out = Vec::with_capacity(2 * fv.len());
        for (&fi, zi) in fv.iter().zip(&sv) {
            let d = notch_s21(&m, fi) - zi;
            out.push(d.re);
            out.push(d.im);
        }
        out
    };
    let init = [pf.fr_hz, pf.ql, qc0, phi0, a0, alpha0, tau];
    let report = least_squares(residual, &init, None, &LeastSquaresOptions::default());
    let p = &report.parameters;

    let params = NotchParams {
        fr_hz: p[0],
        ql: p[1],
        qc_mag: p[2],
        phi_rad: wrap_angle(p[3]),
        a: p[4],
        alpha_rad: wrap_angle(p[5]),
        tau_s: p[6],
    };
    params.validate()?;
    let qi = params.qi()?;

    let uncertainties = report.covariance.as_ref().map(|cov| {
        let sd = |i: usize| cov[i][i].max(0.0).sqrt();
        // qi = g(ql, qc, phi); propagate through the (1,2,3) block.
        let dql = qi * qi / (params.ql * params.ql);
        let dqc = -qi * qi * params.phi_rad.cos() / (params.qc_mag * params.qc_mag);
        let dphi = -qi * qi * params.phi_rad.sin() / params.qc_mag;
        let grad = [dql, dqc, dphi];
        let idx = [1, 2, 3];
        let mut var_qi = 0.0;
        for (gi, &i) in grad.iter().zip(&idx) {
            for (gj, &j) in grad.iter().zip(&idx) {
                var_qi += gi * gj * cov[i][j];
            }
        }
        FitUncertainties {
            fr_hz: sd(0),
            ql: sd(1),
            qc_mag: sd(2),
            phi_rad: sd(3),
            qi: var_qi.max(0.0).sqrt(),
        }
    });

    Ok(NotchFitResult {
        params,
        qi,
        coupling_coefficient: qi / params.qc_mag,
        uncertainties,
        diagnostics: FitDiagnostics {
            residual_norm: report.residual_norm,
            n_points: n,
            converged: pf.converged && report.converged,
            iterations: report.iterations,
        },
    })
}

/// Initial `(fr, ql)` for the phase fit: `fr` at the steepest slope of the
/// lightly smoothed centered phase, `ql` from the FWHM of the |S21| dip.
fn phase_fit_initials(f: &[f64], z: &[Complex64], ph: &[f64]) -> (f64, f64) {
    let n = f.len();
    // Boxcar smoothing against sample noise; window ~ n/100 keeps it well
    // below a 10-linewidth span's resonance width.
    let hw = (n / 200).max(1);
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(hw);
            let hi = (i + hw + 1).min(n);
            ph[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut i_steep = n / 2;
    let mut best = -1.0;
    for i in 1..n - 1 {
        let s = ((smooth[i + 1] - smooth[i - 1]) / (f[i + 1] - f[i - 1])).abs();
        if s > best {
            best = s;
            i_steep = i;
        }
    }
    let fr0 = f[i_steep];

    let mag: Vec<f64> = z.iter().map(|v| v.norm()).collect();
    let ne = (n / 10).max(3);
    let base =
        (mag[..ne].iter().sum::<f64>() + mag[n - ne..].iter().sum::<f64>()) / (2 * ne) as f64;
    let (i_min, min) = mag
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("non-empty");
    let half_level = 0.5 * (base + min);
    let mut li = i_min;
    while li > 0 && mag[li] <= half_level {
        li -= 1;
    }
    let mut ri = i_min;
    while ri < n - 1 && mag[ri] <= half_level {
        ri += 1;
    }
    let fwhm = (f[ri] - f[li]).max(f[1] - f[0]);
    (fr0, fr0 / fwhm)
}

/// Wrap an angle into `(-pi, pi]`.
fn wrap_angle(x: f64) -> f64 {
    let w = x - TAU_2PI * (x / TAU_2PI).round();
    if w <= -std::f64::consts::PI {
        w + TAU_2PI
    } else {
        w
    }
}
