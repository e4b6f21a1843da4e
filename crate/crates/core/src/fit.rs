//! Small nonlinear least-squares solver (Levenberg-Marquardt, numerical
//! Jacobian) shared by the lineshape, decay and population fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative decrease of the cost below which the fit stops.
    pub tolerance: f64,
    /// Relative finite-difference step.
    pub diff_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, tolerance: 1e-14, diff_step: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration limit was hit.
    pub converged: bool,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, p: &[f64], r0: &[f64], h: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(r0.len(), p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let step = h * p[k].abs().max(1e-3 * h.sqrt()).max(f64::MIN_POSITIVE.sqrt());
        q[k] = p[k] + step;
        let rp = f(&q);
        q[k] = p[k] - step;
        let rm = f(&q);
        q[k] = p[k];
        for i in 0..r0.len() {
            j[(i, k)] = (rp[i] - rm[i]) / (2.0 * step);
        }
    }
    j
}

/// Minimizes the sum of squared residuals returned by `f`.
pub fn levenberg_marquardt(f: impl Fn(&[f64]) -> Vec<f64>, p0: &[f64], opts: &LmOptions) -> Result<LmFit> {
    let mut p = p0.to_vec();
    let mut r = f(&p);
    if r.len() < p.len() {
        return Err(Error::InsufficientSamples(format!("{} residuals for {} parameters", r.len(), p.len())));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailed { reason: "non-finite residual at the start point".into(), residual: f64::NAN });
    }
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let j = jacobian(&f, &p, &r, opts.diff_step);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..p.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(delta) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let rt = f(&trial);
            let ct = cost_of(&rt);
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < opts.tolerance {
                    return Ok(LmFit { params: p, cost, residuals: r, iterations, converged: true });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved || cost == 0.0 {
            return Ok(LmFit { params: p, cost, residuals: r, iterations, converged: true });
        }
    }
    Ok(LmFit { params: p, cost, residuals: r, iterations, converged: false })
}

/// Weighted linear least squares: minimizes Σ w_i (y_i − Σ_k c_k X_ik)².
pub fn linear_least_squares(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(Error::DimensionMismatch { a: (x.nrows(), x.ncols()), b: (y.len(), w.len()) });
    }
    if y.len() < x.ncols() {
        return Err(Error::InsufficientSamples(format!("{} points for {} coefficients", y.len(), x.ncols())));
    }
    let mut a = x.clone();
    let mut b = DVector::from_column_slice(y);
    for i in 0..y.len() {
        let s = w[i].max(0.0).sqrt();
        a.row_mut(i).scale_mut(s);
        b[i] *= s;
    }
    let svd = a.svd(true, true);
    let sol = svd.solve(&b, 1e-14).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}
