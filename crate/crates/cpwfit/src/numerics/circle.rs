//! Algebraic circle fitting by Taubin's method.

use super::NumericsError;

/// Relative floor for the mean squared spread of the centered points; below
/// it the cloud is treated as a single point.
const COINCIDENT_TOL: f64 = 1e-24;

/// Floor for the normalized covariance discriminant `Cov_xy / Mz^2`; below
/// it the points are collinear and no finite circle exists.
const COLLINEAR_TOL: f64 = 1e-12;

/// A circle in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// Fit a circle to points by minimizing the Taubin functional.
///
/// Taubin's estimate minimizes the algebraic residual of
/// `(x - cx)^2 + (y - cy)^2 - r^2` normalized by its gradient, which makes
/// it nearly unbiased for small noise and exact for points lying on a
/// circle. The estimate is the smallest non-negative root `eta` of the
/// characteristic polynomial of the generalized eigenproblem for the
/// centered second through fourth moments,
///
/// ```text
///   P(eta) = 4 Mz eta^3 - (3 Mz^2 + Mzz) eta^2
///          + (Vz Mz + 4 Cxy Mz - Mxz^2 - Myz^2) eta
///          + Mxz^2 Myy + Myz^2 Mxx - 2 Mxz Myz Mxy - Vz Cxy
/// ```
///
/// with `Mz = Mxx + Myy`, `Cxy = Mxx Myy - Mxy^2`, `Vz = Mzz - Mz^2`.
/// `P(0) <= 0` and `P` increases left of its smallest positive root, so
/// Newton iteration from `eta = 0` converges to the wanted root.
///
/// # Errors
///
/// * [`NumericsError::TooFewPoints`] for fewer than three points.
/// * [`NumericsError::DegenerateCircle`] when the points coincide or are
///   collinear (normalized discriminant below `1e-12`).
pub fn fit_circle(points: &[(f64, f64)]) -> Result<Circle, NumericsError> {
    let n = points.len();
    if n < 3 {
        return Err(NumericsError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;

    let (mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0);
    let (mut mxz, mut myz, mut mzz) = (0.0, 0.0, 0.0);
    for p in points {
        let u = p.0 - mx;
        let v = p.1 - my;
        let z = u * u + v * v;
        mxx += u * u;
        myy += v * v;
        mxy += u * v;
        mxz += u * z;
        myz += v * z;
        mzz += z * z;
    }
    mxx /= nf;
    myy /= nf;
    mxy /= nf;
    mxz /= nf;
    myz /= nf;
    mzz /= nf;

    let mz = mxx + myy;
    if mz <= COINCIDENT_TOL * (mx * mx + my * my) || mz == 0.0 {
        return Err(NumericsError::DegenerateCircle("all points coincide"));
    }
    let cov_xy = mxx * myy - mxy * mxy;
    if cov_xy / (mz * mz) < COLLINEAR_TOL {
        return Err(NumericsError::DegenerateCircle("points are collinear"));
    }
    let var_z = mzz - mz * mz;

    let a3 = 4.0 * mz;
    let a2 = -3.0 * mz * mz - mzz;
    let a1 = var_z * mz + 4.0 * cov_xy * mz - mxz * mxz - myz * myz;
    let a0 = mxz * mxz * myy + myz * myz * mxx - 2.0 * mxz * myz * mxy - var_z * cov_xy;

    // Newton from eta = 0; the wanted root is the smallest non-negative one
    // and P is convex increasing on the approach, so this cannot overshoot.
    let mut eta = 0.0_f64;
    let mut p_old = f64::INFINITY;
    for _ in 0..24 {
        let p_val = a0 + eta * (a1 + eta * (a2 + eta * a3));
        if p_val.abs() > p_old.abs() {
            eta = 0.0;
            break;
        }
        p_old = p_val;
        let dp = a1 + eta * (2.0 * a2 + eta * 3.0 * a3);
        if dp == 0.0 {
            break;
        }
        let next = eta - p_val / dp;
        if !next.is_finite() || next < 0.0 {
            break;
        }
        if (next - eta).abs() <= 1e-14 * next.abs() {
            eta = next;
            break;
        }
        eta = next;
    }

    let det = eta * eta - eta * mz + cov_xy;
    if det.abs() < COLLINEAR_TOL * mz * mz {
        return Err(NumericsError::DegenerateCircle("characteristic root is defective"));
    }
    let ucx = (mxz * (myy - eta) - myz * mxy) / (2.0 * det);
    let ucy = (myz * (mxx - eta) - mxz * mxy) / (2.0 * det);
    let radius = (ucx * ucx + ucy * ucy + mz).sqrt();
    Ok(Circle { cx: ucx + mx, cy: ucy + my, radius })
}
