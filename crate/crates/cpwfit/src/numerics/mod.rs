//! Numerical kernels: complete elliptic integrals, algebraic circle fitting
//! and a Levenberg-Marquardt least-squares driver.
//!
//! These are deliberately small and self-contained; every routine here is on
//! the hot path of either the design equations or the trace fits.

mod circle;
mod elliptic;
mod leastsq;

pub use circle::{fit_circle, Circle};
pub use elliptic::ellip_k;
pub use leastsq::{least_squares, least_squares_with_jacobian, LeastSquaresOptions, LeastSquaresReport};

use thiserror::Error;

/// Errors from the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    /// Complete elliptic integral modulus outside `[0, 1)`.
    #[error("elliptic modulus k = {0} outside [0, 1)")]
    EllipticDomain(f64),
    /// Circle fit called with fewer than three points.
    #[error("circle fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    /// Circle fit geometry does not determine a circle.
    #[error("degenerate circle fit geometry: {0}")]
    DegenerateCircle(&'static str),
}
