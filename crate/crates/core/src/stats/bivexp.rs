use super::sampling::{open01, sample_exponential};
use crate::math::{floor, ln, sqrt, LN_2PI};
use crate::{Error, Result};
use rand::Rng;

/// Bivariate exponential law with exponential marginals of means `sigma1`,
/// `sigma2` and correlation `rho` (Downton / Moran form, with the
/// modified-Bessel joint density).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivExpParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
}

impl BivExpParams {
    pub fn new(sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        let p = Self { sigma1, sigma2, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma1.is_finite() && self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Domain("bivariate exponential means must be positive"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Domain("bivariate exponential correlation must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Exact draw: a Geometric(1 - rho) count `N` shared by both margins, each
/// margin the sum of `N` exponentials with mean `sigma * (1 - rho)`.
pub fn sample_biv_exponential<R: Rng + ?Sized>(params: &BivExpParams, rng: &mut R) -> Result<(f64, f64)> {
    params.validate()?;
    let rho = params.rho;
    let count = if rho == 0.0 {
        1
    } else {
        // P(N > j) = rho^j
        1 + floor(ln(open01(rng)) / ln(rho)) as u64
    };
    let rate1 = 1.0 / (params.sigma1 * (1.0 - rho));
    let rate2 = 1.0 / (params.sigma2 * (1.0 - rho));
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for _ in 0..count {
        e1 += sample_exponential(rng, rate1);
        e2 += sample_exponential(rng, rate2);
    }
    Ok((e1, e2))
}

/// `ln I₀(x)` for `x >= 0`: power series below 50, Hankel asymptotic series
/// above.
pub fn ln_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 50.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut m = 0.0;
        loop {
            m += 1.0;
            term *= q / (m * m);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        ln(sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..100 {
            let k = k as f64;
            let next = term * (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * x);
            if next < 1e-17 * sum || next > term {
                break;
            }
            term = next;
            sum += term;
        }
        x - 0.5 * (LN_2PI + ln(x)) + ln(sum)
    }
}

/// Joint log density on `[0, ∞)²`; `-∞` outside the support.
pub fn biv_exponential_log_pdf(params: &BivExpParams, x: f64, y: f64) -> f64 {
    if x < 0.0 || y < 0.0 {
        return f64::NEG_INFINITY;
    }
    let BivExpParams { sigma1, sigma2, rho } = *params;
    let one_m = 1.0 - rho;
    let arg = 2.0 * sqrt(rho * x * y / (sigma1 * sigma2)) / one_m;
    -ln(sigma1 * sigma2 * one_m) - (x / sigma1 + y / sigma2) / one_m + ln_bessel_i0(arg)
}
