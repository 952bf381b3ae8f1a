use crate::math::{erfc, ln, log1m_exp, log1p, HALF_LN_2PI};
use crate::{Error, Result};
use core::f64::consts::FRAC_1_SQRT_2;

/// Below this point the log-CDF switches from `ln(erfc)` to the Mills-ratio
/// continued fraction.
const LOG_TAIL_SWITCH: f64 = -10.0;

pub fn std_normal_pdf(z: f64) -> f64 {
    crate::math::exp(-0.5 * z * z - HALF_LN_2PI)
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(z)`, evaluated directly so it keeps full relative
/// precision for large `z`.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// Mills ratio `(1 - Φ(t)) / φ(t)` for `t >= 10` via Laplace's continued
/// fraction, evaluated bottom-up.
fn mills_ratio(t: f64) -> f64 {
    let mut f = t;
    for k in (1..=60).rev() {
        f = t + k as f64 / f;
    }
    1.0 / f
}

/// `ln Φ(z)`. Finite for every finite `z`; `-∞` only at `z = -∞`.
pub fn std_normal_log_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z > 5.0 {
        log1p(-std_normal_sf(z))
    } else if z > LOG_TAIL_SWITCH {
        ln(std_normal_cdf(z))
    } else {
        let t = -z;
        -0.5 * t * t - HALF_LN_2PI + ln(mills_ratio(t))
    }
}

/// `ln(1 - Φ(z))`.
pub fn std_normal_log_sf(z: f64) -> f64 {
    std_normal_log_cdf(-z)
}

/// `ln(Φ(b) - Φ(a))` for standardized cut points `a < b`.
///
/// The difference is taken in whichever tail both points share, so narrow
/// intervals far from the mode keep their relative precision. Returns `-∞`
/// (never NaN) when the probability underflows or `a >= b`.
pub fn log_normal_interval_prob(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        return f64::NAN;
    }
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if b <= 0.0 {
        let hi = std_normal_log_cdf(b);
        if hi == f64::NEG_INFINITY {
            return hi;
        }
        hi + log1m_exp(std_normal_log_cdf(a) - hi)
    } else if a >= 0.0 {
        let hi = std_normal_log_sf(a);
        if hi == f64::NEG_INFINITY {
            return hi;
        }
        hi + log1m_exp(std_normal_log_sf(b) - hi)
    } else {
        // a < 0 < b: both excluded tails are below one half.
        ln(1.0 - std_normal_cdf(a) - std_normal_sf(b))
    }
}

/// Log density of `N(mean, sd²)` at `x`.
pub fn log_normal_pdf(x: f64, mean: f64, sd: f64) -> Result<f64> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Domain("normal sd must be positive and finite"));
    }
    let u = (x - mean) / sd;
    Ok(-0.5 * u * u - ln(sd) - HALF_LN_2PI)
}

/// Log density of the inverse-gamma law with the given shape and scale:
/// `b^a / Γ(a) · x^{-a-1} · exp(-b/x)`.
pub fn log_inv_gamma_pdf(x: f64, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(Error::Domain("inverse-gamma shape and scale must be positive"));
    }
    if !(x > 0.0) {
        return Err(Error::Domain("inverse-gamma support is x > 0"));
    }
    Ok(shape * ln(scale) - crate::math::lgamma(shape) - (shape + 1.0) * ln(x) - scale / x)
}
