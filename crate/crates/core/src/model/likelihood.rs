use super::types::{ClusterParams, Dataset, H0Spec, Observation, Outcome, RegressionParams};
use crate::math::{ln, sqrt, HALF_LN_2PI};
use crate::stats::{
    inverse_gamma_unchecked, log_inv_gamma_pdf, log_normal_interval_prob, log_normal_pdf, open01, sample_normal,
    std_normal_log_cdf, std_normal_log_sf,
};
use crate::{Error, Result};
use core::f64::consts::LN_2;
use rand::Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x - α1'g - α2'z` without dimension checks.
#[inline]
pub(crate) fn residual_unchecked(obs: &Observation, reg: &RegressionParams) -> f64 {
    obs.x - dot(&reg.alpha1, &obs.g) - dot(&reg.alpha2, &obs.z)
}

/// `β1 x + β2'z` without dimension checks.
#[inline]
pub(crate) fn outcome_predictor_unchecked(obs: &Observation, reg: &RegressionParams) -> f64 {
    reg.beta1 * obs.x + dot(&reg.beta2, &obs.z)
}

fn check_obs_dims(obs: &Observation, reg: &RegressionParams) -> Result<()> {
    reg.check_dims(obs.z.len(), obs.g.len())
}

/// First-stage residual `e1 = x - α1'g - α2'z`.
pub fn first_stage_residual(obs: &Observation, reg: &RegressionParams) -> Result<f64> {
    check_obs_dims(obs, reg)?;
    Ok(residual_unchecked(obs, reg))
}

/// Mean and standard deviation of `y` given `x`, `z`, `g` under one
/// bivariate-normal component: the second-stage predictor plus the
/// regression of `ξ2` on the first-stage residual.
pub fn second_stage_conditional(
    obs: &Observation,
    reg: &RegressionParams,
    theta: &ClusterParams,
) -> Result<(f64, f64)> {
    check_obs_dims(obs, reg)?;
    if !theta.is_valid() {
        return Err(Error::Domain("invalid cluster parameters"));
    }
    let k = ThetaKernel::new(theta);
    let e1 = residual_unchecked(obs, reg);
    let lp2 = outcome_predictor_unchecked(obs, reg);
    Ok((k.conditional_mean(e1, lp2), k.cond_sd))
}

/// Per-component constants for repeated likelihood evaluation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ThetaKernel {
    mu1: f64,
    mu2: f64,
    inv_sd1: f64,
    ln_sd1: f64,
    slope: f64,
    cond_sd: f64,
    inv_cond_sd: f64,
    ln_cond_sd: f64,
}

impl ThetaKernel {
    pub(crate) fn new(theta: &ClusterParams) -> Self {
        let sd1 = sqrt(theta.sigma1_sq);
        let sd2 = sqrt(theta.sigma2_sq);
        let cond_sd = sd2 * sqrt((1.0 - theta.rho) * (1.0 + theta.rho));
        Self {
            mu1: theta.mu1,
            mu2: theta.mu2,
            inv_sd1: 1.0 / sd1,
            ln_sd1: ln(sd1),
            slope: theta.rho * sd2 / sd1,
            cond_sd,
            inv_cond_sd: 1.0 / cond_sd,
            ln_cond_sd: ln(cond_sd),
        }
    }

    #[inline]
    fn conditional_mean(&self, e1: f64, lp2: f64) -> f64 {
        lp2 + self.mu2 + self.slope * (e1 - self.mu1)
    }

    /// Log likelihood of one observation given its first-stage residual
    /// `e1` and second-stage predictor `lp2`.
    #[inline]
    pub(crate) fn loglik(&self, outcome: &Outcome, e1: f64, lp2: f64) -> f64 {
        let d1 = (e1 - self.mu1) * self.inv_sd1;
        let first = -0.5 * d1 * d1 - self.ln_sd1 - HALF_LN_2PI;
        let m = self.conditional_mean(e1, lp2);
        let s = self.inv_cond_sd;
        let second = match *outcome {
            Outcome::Left(l) => std_normal_log_cdf((l - m) * s),
            Outcome::Interval(l, r) => log_normal_interval_prob((l - m) * s, (r - m) * s),
            Outcome::Right(r) => std_normal_log_sf((r - m) * s),
            Outcome::Exact(y) => {
                let u = (y - m) * s;
                -0.5 * u * u - self.ln_cond_sd - HALF_LN_2PI
            }
        };
        first + second
    }
}

/// Log likelihood contribution of one observation under component `theta`:
/// the normal first-stage density of `x` plus the log probability of the
/// censoring event under the conditional law of `y`. Underflow of the
/// censoring probability gives `-∞`, never NaN.
pub fn obs_loglik(obs: &Observation, reg: &RegressionParams, theta: &ClusterParams) -> Result<f64> {
    check_obs_dims(obs, reg)?;
    obs.outcome.validate()?;
    if !theta.is_valid() {
        return Err(Error::Domain("invalid cluster parameters"));
    }
    let k = ThetaKernel::new(theta);
    Ok(k.loglik(&obs.outcome, residual_unchecked(obs, reg), outcome_predictor_unchecked(obs, reg)))
}

/// Sum of per-observation log likelihoods, observation `i` evaluated under
/// `clusters[assignment[i]]`. Summed in observation order.
pub fn dataset_loglik(
    data: &Dataset,
    reg: &RegressionParams,
    assignment: &[usize],
    clusters: &[ClusterParams],
) -> Result<f64> {
    if assignment.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: assignment.len() });
    }
    reg.check_dims(data.p(), data.q())?;
    if let Some(&id) = assignment.iter().find(|&&c| c >= clusters.len()) {
        return Err(Error::DanglingCluster { id, k: clusters.len() });
    }
    if clusters.iter().any(|t| !t.is_valid()) {
        return Err(Error::Domain("invalid cluster parameters"));
    }
    let kernels: alloc::vec::Vec<ThetaKernel> = clusters.iter().map(ThetaKernel::new).collect();
    let mut total = 0.0;
    for (obs, &c) in data.observations().iter().zip(assignment) {
        total += kernels[c].loglik(&obs.outcome, residual_unchecked(obs, reg), outcome_predictor_unchecked(obs, reg));
    }
    Ok(total)
}

/// Log density of `theta` under the base measure; `-∞` off the support.
pub fn h0_log_density(theta: &ClusterParams, spec: &H0Spec) -> f64 {
    if !theta.is_valid() {
        return f64::NEG_INFINITY;
    }
    let parts = [
        log_normal_pdf(theta.mu1, spec.mu1_mean, sqrt(spec.mu1_var)),
        log_normal_pdf(theta.mu2, spec.mu2_mean, sqrt(spec.mu2_var)),
        log_inv_gamma_pdf(theta.sigma1_sq, spec.var_shape, spec.var_scale),
        log_inv_gamma_pdf(theta.sigma2_sq, spec.var_shape, spec.var_scale),
    ];
    let mut total = -LN_2;
    for p in parts {
        match p {
            Ok(v) => total += v,
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    total
}

/// Independent draw of each factor of the base measure.
pub fn sample_theta_h0<R: Rng + ?Sized>(spec: &H0Spec, rng: &mut R) -> ClusterParams {
    let mu1 = sample_normal(rng, spec.mu1_mean, sqrt(spec.mu1_var));
    let mu2 = sample_normal(rng, spec.mu2_mean, sqrt(spec.mu2_var));
    let sigma1_sq = inverse_gamma_unchecked(rng, spec.var_shape, spec.var_scale);
    let sigma2_sq = inverse_gamma_unchecked(rng, spec.var_shape, spec.var_scale);
    let rho = 2.0 * open01(rng) - 1.0;
    ClusterParams { mu1, mu2, sigma1_sq, sigma2_sq, rho }
}
