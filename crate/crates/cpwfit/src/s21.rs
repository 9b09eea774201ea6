//! Notch-type resonator forward model with environment terms, and a
//! seeded synthetic-trace generator for round-trip tests.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from model-parameter and trace validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum S21Error {
    #[error("notch parameters invalid: {0}")]
    InvalidParams(&'static str),
    #[error("derived qi is unphysical: 1/ql - cos(phi)/qc_mag = {denom} <= 0 (ql = {ql}, qc_mag = {qc_mag}, phi = {phi})")]
    UnphysicalQi { ql: f64, qc_mag: f64, phi: f64, denom: f64 },
    #[error("trace invalid: {0}")]
    InvalidTrace(&'static str),
    #[error("frequency grid not strictly increasing at index {0}")]
    NonMonotonicGrid(usize),
    #[error("non-finite S21 sample at index {0}")]
    NonFiniteSample(usize),
}

/// Parameters of the notch model
///
/// ```text
///   S21(f) = a e^{i alpha} e^{-2 pi i f tau}
///            [ 1 - (ql/qc_mag) e^{i phi} / (1 + 2 i ql (f/fr - 1)) ]
/// ```
///
/// `(a, alpha, tau)` describe the measurement environment, the bracket the
/// resonator itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotchParams {
    /// Resonance frequency, Hz.
    pub fr_hz: f64,
    /// Loaded quality factor.
    pub ql: f64,
    /// Coupling quality factor magnitude |Qc|.
    pub qc_mag: f64,
    /// Impedance-mismatch rotation, rad.
    pub phi_rad: f64,
    /// Environment amplitude.
    pub a: f64,
    /// Environment phase, rad.
    pub alpha_rad: f64,
    /// Electronic (cable) delay, s.
    pub tau_s: f64,
}

impl NotchParams {
    /// Check positivity and finiteness of every field.
    ///
    /// Deliberately does not require the derived `qi` to be positive: an
    /// overcoupled-beyond-physical parameter set is representable, and
    /// [`NotchParams::qi`] reports it as an error when asked.
    pub fn validate(&self) -> Result<(), S21Error> {
        if !(self.fr_hz > 0.0) || !self.fr_hz.is_finite() {
            return Err(S21Error::InvalidParams("fr must be positive"));
        }
        if !(self.ql > 0.0) || !self.ql.is_finite() {
            return Err(S21Error::InvalidParams("ql must be positive"));
        }
        if !(self.qc_mag > 0.0) || !self.qc_mag.is_finite() {
            return Err(S21Error::InvalidParams("qc_mag must be positive"));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(S21Error::InvalidParams("a must be positive"));
        }
        if !self.phi_rad.is_finite() || !self.alpha_rad.is_finite() || !self.tau_s.is_finite() {
            return Err(S21Error::InvalidParams("phi, alpha, tau must be finite"));
        }
        Ok(())
    }

    /// Diameter-corrected internal quality factor,
    /// `1/qi = 1/ql - cos(phi)/qc_mag`.
    ///
    /// # Errors
    ///
    /// [`S21Error::UnphysicalQi`] when the right-hand side is not positive.
    pub fn qi(&self) -> Result<f64, S21Error> {
        let denom = 1.0 / self.ql - self.phi_rad.cos() / self.qc_mag;
        if denom <= 0.0 {
            return Err(S21Error::UnphysicalQi {
                ql: self.ql,
                qc_mag: self.qc_mag,
                phi: self.phi_rad,
                denom,
            });
        }
        Ok(1.0 / denom)
    }
}

/// Optional acquisition context attached to a trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    /// VNA output power, dBm.
    pub p_vna_dbm: Option<f64>,
    /// Total line attenuation, dB (negative; added to the VNA power).
    pub p_att_db: Option<f64>,
    /// Sample temperature, K.
    pub temperature_k: Option<f64>,
}

/// A sampled complex transmission trace on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTrace {
    frequencies_hz: Vec<f64>,
    s21: Vec<Complex64>,
    pub metadata: TraceMetadata,
}

impl ComplexTrace {
    /// Build a trace, enforcing grid monotonicity and sample finiteness.
    ///
    /// Short traces (down to 2 points) are representable so file parsers
    /// can round-trip them; the fitting entry points enforce their own
    /// minimum lengths.
    pub fn new(
        frequencies_hz: Vec<f64>,
        s21: Vec<Complex64>,
        metadata: TraceMetadata,
    ) -> Result<Self, S21Error> {
        if frequencies_hz.len() != s21.len() {
            return Err(S21Error::InvalidTrace("frequency and sample counts differ"));
        }
        if frequencies_hz.len() < 2 {
            return Err(S21Error::InvalidTrace("need at least 2 points"));
        }
        for (i, &f) in frequencies_hz.iter().enumerate() {
            if !f.is_finite() {
                return Err(S21Error::InvalidTrace("non-finite frequency"));
            }
            if i > 0 && f <= frequencies_hz[i - 1] {
                return Err(S21Error::NonMonotonicGrid(i));
            }
        }
        for (i, z) in s21.iter().enumerate() {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(S21Error::NonFiniteSample(i));
            }
        }
        Ok(ComplexTrace { frequencies_hz, s21, metadata })
    }

    pub fn len(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies_hz.is_empty()
    }

    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn s21(&self) -> &[Complex64] {
        &self.s21
    }

    /// Full frequency span `f_last - f_first`, Hz.
    pub fn span_hz(&self) -> f64 {
        self.frequencies_hz[self.frequencies_hz.len() - 1] - self.frequencies_hz[0]
    }
}

/// Evaluate the notch model at one probe frequency.
pub fn notch_s21(p: &NotchParams, f_hz: f64) -> Complex64 {
    let env = Complex64::from_polar(p.a, p.alpha_rad - std::f64::consts::TAU * f_hz * p.tau_s);
    let depth = Complex64::from_polar(p.ql / p.qc_mag, p.phi_rad);
    let det = Complex64::new(1.0, 2.0 * p.ql * (f_hz / p.fr_hz - 1.0));
    env * (Complex64::new(1.0, 0.0) - depth / det)
}

/// Generate a uniform-grid trace of the model plus additive white complex
/// Gaussian noise (independent real and imaginary components, each of
/// standard deviation `noise_sigma`).
///
/// Deterministic: the generator is ChaCha8 seeded from `seed`, drawing the
/// real then the imaginary component per point in grid order.
///
/// # Panics
///
/// On precondition violations: invalid `p`, `f_start >= f_stop`,
/// `n_points < 16`, or negative `noise_sigma`.
pub fn synthesize_trace(
    p: &NotchParams,
    f_start_hz: f64,
    f_stop_hz: f64,
    n_points: usize,
    noise_sigma: f64,
    seed: u64,
) -> ComplexTrace {
    p.validate().expect("notch parameters must be valid");
    assert!(f_start_hz < f_stop_hz, "f_start must be below f_stop");
    assert!(n_points >= 16, "need at least 16 points");
    assert!(noise_sigma >= 0.0 && noise_sigma.is_finite(), "noise_sigma must be >= 0");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nm1 = (n_points - 1) as f64;
    let mut freqs = Vec::with_capacity(n_points);
    let mut samples = Vec::with_capacity(n_points);
    for j in 0..n_points {
        let t = j as f64 / nm1;
        let f = f_start_hz * (1.0 - t) + f_stop_hz * t;
        let mut z = notch_s21(p, f);
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        if noise_sigma > 0.0 {
            z += Complex64::new(noise_sigma * re, noise_sigma * im);
        }
        freqs.push(f);
        samples.push(z);
    }
    ComplexTrace::new(freqs, samples, TraceMetadata::default())
        .expect("uniform grid from ordered endpoints is monotone")
}
