//! Damped least squares (Levenberg-Marquardt) for small dense problems.
//!
//! Problem sizes here are tiny (at most a few thousand residuals, fewer
//! than ten parameters), so the normal equations are formed explicitly and
//! solved by Gaussian elimination with partial pivoting.

/// Tuning knobs for [`least_squares`].
#[derive(Debug, Clone, Copy)]
pub struct LeastSquaresOptions {
    /// Hard iteration cap; hitting it leaves `converged = false`.
    pub max_iterations: usize,
    /// Declare convergence when the accepted relative step falls below this.
    pub rel_step_tol: f64,
    /// Declare convergence when the relative cost decrease falls below this.
    pub rel_cost_tol: f64,
    /// Initial damping factor; divided by 10 on accepted steps, multiplied
    /// by 10 on rejected ones.
    pub lambda_init: f64,
}

impl Default for LeastSquaresOptions {
    fn default() -> Self {
        // The cost tolerance is deliberately tight: the TLS loss fit is
        // ill-conditioned in (n_c, beta) and stalls short of the optimum
        // with looser settings.
        LeastSquaresOptions {
            max_iterations: 500,
            rel_step_tol: 1e-10,
            rel_cost_tol: 1e-12,
            lambda_init: 1e-6,
        }
    }
}

/// Outcome of a [`least_squares`] run.
#[derive(Debug, Clone)]
pub struct LeastSquaresReport {
    /// Parameter vector at the final (best) point.
    pub parameters: Vec<f64>,
    /// Parameter covariance `sigma_hat^2 (J^T J)^-1` at the solution, or
    /// `None` when `J^T J` is singular or there are no residual degrees of
    /// freedom.
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Euclidean norm of the residual vector at the solution.
    pub residual_norm: f64,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Whether a convergence criterion fired before the iteration cap.
    pub converged: bool,
}

/// Relative step for finite-difference Jacobians.
const FD_REL_STEP: f64 = 1e-8;
/// Absolute floor for finite-difference steps.
const FD_MIN_STEP: f64 = 1e-12;

/// Minimize `|r(p)|^2` with a finite-difference Jacobian.
///
/// The Jacobian is taken by central differences with per-parameter step
/// `max(1e-8 |p_i|, 1e-12)`; the residual function must therefore be
/// evaluable in a small neighborhood of the iterates, including just
/// outside any supplied bounds.
///
/// `bounds`, when given, is one `(lower, upper)` pair per parameter
/// (infinities allowed); trial steps are clamped into the box.
///
/// The iteration uses Marquardt scaling, `(J^T J + lambda D) delta = -J^T r`
/// with `D = diag(J^T J)`, so damping is invariant under parameter
/// rescaling. A degenerate problem (zero Jacobian, e.g. a constant
/// residual) converges immediately at the initial point with covariance
/// unavailable.
pub fn least_squares<F>(
    residuals: F,
    initial: &[f64],
    bounds: Option<&[(f64, f64)]>,
    options: &LeastSquaresOptions,
) -> LeastSquaresReport
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    drive(&residuals, None, initial, bounds, options)
}

/// Same as [`least_squares`] but with a caller-supplied analytic Jacobian
/// (row `j`, column `i` holds `d r_j / d p_i`).
pub fn least_squares_with_jacobian<F, J>(
    residuals: F,
    jacobian: J,
    initial: &[f64],
    bounds: Option<&[(f64, f64)]>,
    options: &LeastSquaresOptions,
) -> LeastSquaresReport
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    drive(&residuals, Some(&jacobian), initial, bounds, options)
}

type ResidualFn<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;
type JacobianFn<'a> = &'a dyn Fn(&[f64]) -> Vec<Vec<f64>>;

fn drive(
    f: ResidualFn,
    jac: Option<JacobianFn>,
    initial: &[f64],
    bounds: Option<&[(f64, f64)]>,
    options: &LeastSquaresOptions,
) -> LeastSquaresReport {
    let np = initial.len();
    if let Some(b) = bounds {
        assert_eq!(b.len(), np, "one (lower, upper) pair per parameter");
        for &(lo, hi) in b {
            assert!(lo <= hi, "bound lower > upper");
        }
    }
    let clamp = |p: &mut [f64]| {
        if let Some(b) = bounds {
            for (v, &(lo, hi)) in p.iter_mut().zip(b) {
                *v = v.clamp(lo, hi);
            }
        }
    };

    let mut p = initial.to_vec();
    clamp(&mut p);
    let mut r = f(&p);
    let m = r.len();
    let mut cost = dot(&r, &r);
    let mut lambda = options.lambda_init;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=options.max_iterations {
        iterations = iter;
        let j = match jac {
            Some(aj) => aj(&p),
            None => fd_jacobian(f, &p, m),
        };
        let (jtj, g) = normal_equations(&j, &r, np);

        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for i in 0..np {
                let d = if jtj[i][i] > 0.0 { jtj[i][i] } else { 1.0 };
                a[i][i] += lambda * d;
            }
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let delta = match solve(a, rhs) {
                Some(d) => d,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut p_new: Vec<f64> = p.iter().zip(&delta).map(|(a, b)| a + b).collect();
            clamp(&mut p_new);
            let r_new = f(&p_new);
            let cost_new = dot(&r_new, &r_new);
            if cost_new.is_finite() && cost_new <= cost {
                let step2: f64 = p_new
                    .iter()
                    .zip(&p)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let scale2: f64 = dot(&p, &p).max(f64::MIN_POSITIVE);
                let rel_step = (step2 / scale2).sqrt();
                let rel_drop = (cost - cost_new) / cost.max(f64::MIN_POSITIVE);
                p = p_new;
                r = r_new;
                cost = cost_new;
                lambda = (lambda * 0.1).max(1e-15);
                accepted = true;
                if rel_step < options.rel_step_tol || rel_drop < options.rel_cost_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !accepted || converged {
            break;
        }
    }

    let covariance = covariance_at(f, jac, &p, &r, m, np, cost);
    LeastSquaresReport {
        parameters: p,
        covariance,
        residual_norm: cost.max(0.0).sqrt(),
        iterations,
        converged,
    }
}

fn covariance_at(
    f: ResidualFn,
    jac: Option<JacobianFn>,
    p: &[f64],
    r: &[f64],
    m: usize,
    np: usize,
    cost: f64,
) -> Option<Vec<Vec<f64>>> {
    if m <= np {
        return None;
    }
    let j = match jac {
        Some(aj) => aj(p),
        None => fd_jacobian(f, p, m),
    };
    let (jtj, _) = normal_equations(&j, r, np);
    let inv = invert(jtj)?;
    let sigma2 = cost / (m - np) as f64;
    Some(
        inv.into_iter()
            .map(|row| row.into_iter().map(|x| x * sigma2).collect())
            .collect(),
    )
}

fn fd_jacobian(f: ResidualFn, p: &[f64], m: usize) -> Vec<Vec<f64>> {
    let np = p.len();
    let mut j = vec![vec![0.0; np]; m];
    let mut work = p.to_vec();
    for i in 0..np {
        let h = (FD_REL_STEP * p[i].abs()).max(FD_MIN_STEP);
        work[i] = p[i] + h;
        let rp = f(&work);
        work[i] = p[i] - h;
        let rm = f(&work);
        work[i] = p[i];
        debug_assert!(rp.len() == m && rm.len() == m, "residual length changed");
        let inv2h = 0.5 / h;
        for (row, (a, b)) in j.iter_mut().zip(rp.iter().zip(&rm)) {
            row[i] = (a - b) * inv2h;
        }
    }
    j
}

fn normal_equations(j: &[Vec<f64>], r: &[f64], np: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut jtj = vec![vec![0.0; np]; np];
    let mut g = vec![0.0; np];
    for (row, &ri) in j.iter().zip(r) {
        for a in 0..np {
            g[a] += row[a] * ri;
            for b in a..np {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..np {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    (jtj, g)
}

/// Gaussian elimination with partial pivoting; `None` on an exactly zero
/// pivot. Ill-conditioned systems are solved as-is; a bad step is rejected
/// by the cost test and retried with more damping.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let fac = a[row][col] / a[col][col];
            if fac == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= fac * a[col][k];
            }
            b[row] -= fac * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

fn invert(a: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))?;
        if aug[piv][col] == 0.0 {
            return None;
        }
        aug.swap(col, piv);
        let d = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let fac = aug[row][col];
            if fac == 0.0 {
                continue;
            }
            for k in 0..2 * n {
                let sub = fac * aug[col][k];
                aug[row][k] -= sub;
            }
        }
    }
    let inv: Vec<Vec<f64>> = aug.into_iter().map(|row| row[n..].to_vec()).collect();
    if inv.iter().flatten().all(|x| x.is_finite()) {
        Some(inv)
    } else {
        None
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
