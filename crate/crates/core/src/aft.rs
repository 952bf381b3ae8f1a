//! Naive single-stage log-normal accelerated failure time model.
//!
//! The outcome is regressed on the endogenous covariate and the observed
//! confounders directly, ignoring the instruments. Under confounding its
//! `coef_x` is biased for the causal effect, which is the point of the
//! comparison. The same fit seeds the samplers and supplies elicited priors.

use crate::math::{exp, ln, sqrt, HALF_LN_2PI};
use crate::model::{Dataset, Outcome};
use crate::stats::{log_normal_interval_prob, std_normal_log_cdf, std_normal_log_sf};
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 500;

/// Maximum-likelihood fit with Wald standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct AftFit {
    pub intercept: f64,
    pub coef_x: f64,
    pub coef_z: Vec<f64>,
    pub scale: f64,
    pub se: AftStdErrors,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest absolute gradient component at the returned point, on the
    /// `(coefficients, log scale)` parametrization.
    pub max_abs_grad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AftStdErrors {
    pub intercept: f64,
    pub coef_x: f64,
    pub coef_z: Vec<f64>,
    pub scale: f64,
}

impl AftFit {
    /// Wald interval `estimate ± z·SE` for `coef_x`.
    pub fn coef_x_interval(&self, z: f64) -> (f64, f64) {
        (self.coef_x - z * self.se.coef_x, self.coef_x + z * self.se.coef_x)
    }
}

/// Log likelihood of the log-normal AFT model with linear predictor
/// `intercept + coef_x·x + coef_z'z` and residual scale `scale`.
pub fn aft_loglik(data: &Dataset, intercept: f64, coef_x: f64, coef_z: &[f64], scale: f64) -> Result<f64> {
    if coef_z.len() != data.p() {
        return Err(Error::DimensionMismatch { expected: data.p(), got: coef_z.len() });
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Domain("AFT scale must be positive"));
    }
    let mut theta = vec![intercept, coef_x];
    theta.extend_from_slice(coef_z);
    theta.push(ln(scale));
    Ok(loglik_flat(data, &theta))
}

fn loglik_flat(data: &Dataset, theta: &[f64]) -> f64 {
    let p = data.p();
    let log_s = theta[p + 2];
    let inv_s = exp(-log_s);
    let mut total = 0.0;
    for o in data.observations() {
        let mut eta = theta[0] + theta[1] * o.x;
        for (b, z) in theta[2..2 + p].iter().zip(&o.z) {
            eta += b * z;
        }
        total += match o.outcome {
            Outcome::Exact(y) => {
                let u = (y - eta) * inv_s;
                -0.5 * u * u - log_s - HALF_LN_2PI
            }
            Outcome::Left(l) => std_normal_log_cdf((l - eta) * inv_s),
            Outcome::Right(r) => std_normal_log_sf((r - eta) * inv_s),
            Outcome::Interval(l, r) => log_normal_interval_prob((l - eta) * inv_s, (r - eta) * inv_s),
        };
    }
    total
}

fn design_columns(data: &Dataset) -> Vec<Vec<f64>> {
    let mut cols = vec![data.observations().iter().map(|o| o.x).collect::<Vec<_>>()];
    for j in 0..data.p() {
        cols.push(data.observations().iter().map(|o| o.z[j]).collect());
    }
    cols
}

/// Fails with [`Error::Collinear`] when the columns, together with an
/// intercept, are (numerically) linearly dependent: a constant column, or a
/// near-zero eigenvalue of the correlation matrix.
pub(crate) fn check_collinearity(cols: &[Vec<f64>]) -> Result<()> {
    let n = cols.first().map_or(0, Vec::len) as f64;
    let mut standardized = Vec::with_capacity(cols.len());
    for c in cols {
        let mean = c.iter().sum::<f64>() / n;
        let ss: f64 = c.iter().map(|v| (v - mean) * (v - mean)).sum();
        let scale = sqrt(ss);
        if !(scale > 1e-12 * (1.0 + mean.abs()) * sqrt(n)) {
            return Err(Error::Collinear);
        }
        standardized.push(c.iter().map(|v| (v - mean) / scale).collect::<Vec<_>>());
    }
    let m = cols.len();
    let gram =
        DMatrix::from_fn(m, m, |i, j| standardized[i].iter().zip(&standardized[j]).map(|(a, b)| a * b).sum::<f64>());
    let eig = gram.symmetric_eigenvalues();
    if eig.iter().any(|&e| e < 1e-10) {
        return Err(Error::Collinear);
    }
    Ok(())
}

/// Least squares of `y` on `[1, cols...]`. Returns the coefficients
/// (intercept first) and the residual variance with `n - m - 1` degrees
/// of freedom (or `n` when that is not positive).
pub(crate) fn ols(cols: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_collinearity(cols)?;
    let n = y.len();
    let m = cols.len() + 1;
    let x = DMatrix::from_fn(n, m, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let chol = xtx.cholesky().ok_or(Error::Collinear)?;
    let beta = chol.solve(&(x.transpose() * &yv));
    let resid = &yv - &x * &beta;
    let dof = if n > m { n - m } else { n };
    let var = resid.dot(&resid) / dof as f64;
    Ok((beta.iter().copied().collect(), var))
}

/// First-stage least squares of `x` on `[1, g, z]`: returns the intercept,
/// `α1`, `α2` and the residual variance.
pub fn first_stage_ols(data: &Dataset) -> Result<(f64, Vec<f64>, Vec<f64>, f64)> {
    let obs = data.observations();
    let (p, q) = (data.p(), data.q());
    if data.len() <= p + q + 1 {
        return Err(Error::InsufficientData(format!(
            "first-stage least squares needs more than {} rows, got {}",
            p + q + 1,
            data.len()
        )));
    }
    let mut cols: Vec<Vec<f64>> = (0..q).map(|j| obs.iter().map(|o| o.g[j]).collect()).collect();
    cols.extend((0..p).map(|j| obs.iter().map(|o| o.z[j]).collect::<Vec<_>>()));
    let x: Vec<f64> = obs.iter().map(|o| o.x).collect();
    let (coef, var) = ols(&cols, &x)?;
    Ok((coef[0], coef[1..1 + q].to_vec(), coef[1 + q..].to_vec(), var))
}

/// Five-point central-difference gradient of `f`. The wide stencil keeps
/// rounding noise in large log-likelihood sums well below the convergence
/// tolerance.
fn numeric_grad(f: &dyn Fn(&[f64]) -> f64, theta: &[f64]) -> Vec<f64> {
    let mut t = theta.to_vec();
    let mut at = |i: usize, v: f64| {
        t[i] = v;
        let r = f(&t);
        t[i] = theta[i];
        r
    };
    (0..theta.len())
        .map(|i| {
            let h = 1e-3 * theta[i].abs().max(1.0);
            let x = theta[i];
            (8.0 * (at(i, x + h) - at(i, x - h)) - (at(i, x + 2.0 * h) - at(i, x - 2.0 * h))) / (12.0 * h)
        })
        .collect()
}

/// Finite-difference Hessian of `f`.
fn numeric_hessian(f: &dyn Fn(&[f64]) -> f64, theta: &[f64]) -> DMatrix<f64> {
    let d = theta.len();
    let h: Vec<f64> = theta.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let mut t = theta.to_vec();
    let mut eval = |di: f64, i: usize, dj: f64, j: usize| {
        t.copy_from_slice(theta);
        t[i] += di * h[i];
        t[j] += dj * h[j];
        f(&t)
    };
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = (eval(1.0, i, 1.0, j) - eval(1.0, i, -1.0, j) - eval(-1.0, i, 1.0, j) + eval(-1.0, i, -1.0, j))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.abs() > m { x.abs() } else { m })
}

/// Quasi-Newton minimization of `f` with BFGS updates, numerically
/// differenced gradients and a backtracking Armijo line search. Returns the
/// minimizer, iteration count and final max-abs gradient.
fn bfgs(f: &dyn Fn(&[f64]) -> f64, start: Vec<f64>) -> (Vec<f64>, usize, f64) {
    let d = start.len();
    let mut x = start;
    let mut fx = f(&x);
    let mut g = numeric_grad(f, &x);
    let mut hinv = DMatrix::<f64>::identity(d, d);
    let mut iter = 0;
    while iter < MAX_ITER && max_abs(&g) >= GRAD_TOL {
        iter += 1;
        let gv = DVector::from_column_slice(&g);
        let mut dir = -(&hinv * &gv);
        if dir.dot(&gv) >= 0.0 {
            hinv = DMatrix::identity(d, d);
            dir = -gv.clone();
        }
        let slope = dir.dot(&gv);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a + step * b).collect();
            let fc = f(&cand);
            // near the optimum the decrease drops below rounding in f, so
            // allow changes within a few ulps
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope + 8.0 * f64::EPSILON * fx.abs() {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            if hinv == DMatrix::identity(d, d) {
                break;
            }
            hinv = DMatrix::identity(d, d);
            continue;
        };
        let gn = numeric_grad(f, &xn);
        let s = DVector::from_iterator(d, xn.iter().zip(&x).map(|(a, b)| a - b));
        let yv = DVector::from_iterator(d, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(d, d);
            let left = &i - rho * &s * yv.transpose();
            let right = &i - rho * &yv * s.transpose();
            hinv = &left * &hinv * &right + rho * &s * s.transpose();
        }
        x = xn;
        fx = fxn;
        g = gn;
    }
    let grad = max_abs(&g);
    (x, iter, grad)
}

/// Maximum-likelihood fit of the log-normal AFT model to the partly
/// interval-censored outcomes, with `x` and `z` as covariates.
///
/// Requires more than `p + 2` rows and at least one observation that is not
/// right-censored. Standard errors come from the inverse of the numerically
/// differenced observed information.
pub fn fit_aft(data: &Dataset) -> Result<AftFit> {
    let p = data.p();
    if data.len() <= p + 2 {
        return Err(Error::InsufficientData(format!("AFT fit needs more than {} rows, got {}", p + 2, data.len())));
    }
    if data.observations().iter().all(|o| matches!(o.outcome, Outcome::Right(_))) {
        return Err(Error::InsufficientData(String::from(
            "AFT fit needs at least one observation that is not right-censored",
        )));
    }
    let cols = design_columns(data);
    // start from least squares on a crude point imputation of each outcome
    let pseudo: Vec<f64> = data
        .observations()
        .iter()
        .map(|o| match o.outcome {
            Outcome::Exact(y) => y,
            Outcome::Interval(l, r) => 0.5 * (l + r),
            Outcome::Left(l) => l,
            Outcome::Right(r) => r,
        })
        .collect();
    let (coef, var) = ols(&cols, &pseudo)?;
    let mut start = coef;
    start.push(0.5 * ln(var.max(1e-6)));

    let objective = |t: &[f64]| -loglik_flat(data, t);
    let (theta, iterations, max_abs_grad) = bfgs(&objective, start);
    let loglik = -objective(&theta);
    let mut converged = max_abs_grad < GRAD_TOL && loglik.is_finite();

    let d = theta.len();
    let hess = numeric_hessian(&objective, &theta);
    let se: Vec<f64> = match hess.cholesky() {
        Some(ch) => {
            let cov = ch.inverse();
            (0..d).map(|i| sqrt(cov[(i, i)].max(0.0))).collect()
        }
        None => {
            converged = false;
            vec![f64::NAN; d]
        }
    };
    let scale = exp(theta[d - 1]);
    Ok(AftFit {
        intercept: theta[0],
        coef_x: theta[1],
        coef_z: theta[2..2 + p].to_vec(),
        scale,
        se: AftStdErrors { intercept: se[0], coef_x: se[1], coef_z: se[2..2 + p].to_vec(), scale: scale * se[d - 1] },
        loglik,
        converged,
        iterations,
        max_abs_grad,
    })
}
