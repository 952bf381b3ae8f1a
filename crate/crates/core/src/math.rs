//! Thin aliases over `libm` so every build, with or without `std`, evaluates
//! the same software implementations and reproduces bit-identical streams.

pub(crate) use libm::{erfc, exp, expm1, floor, lgamma, log as ln, log1p, sqrt};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(exp(a) + exp(b))` without overflow.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + log1p(exp(lo - hi))
}

/// `ln(1 - exp(x))` for `x <= 0`.
pub(crate) fn log1m_exp(x: f64) -> f64 {
    if x > -core::f64::consts::LN_2 {
        ln(-expm1(x))
    } else {
        log1p(-exp(x))
    }
}
