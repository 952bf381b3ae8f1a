use crate::math::{exp, ln, sqrt};
use crate::{Error, Result};
use rand::{Rng, RngCore, SeedableRng};

/// Generator used for every chain, replicate and dataset. One handle per
/// worker; never shared across threads.
pub type ChainRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}

/// Mixes a master seed with a worker/replicate index (SplitMix64 finalizer)
/// so sibling streams are decorrelated.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on `[0, 1)` with 53 random bits.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on the open interval `(0, 1)`; safe to take logs of.
pub(crate) fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal by the Marsaglia polar method (second variate dropped so
/// the call sequence alone determines the stream).
pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = 2.0 * sample_uniform(rng) - 1.0;
        let v = 2.0 * sample_uniform(rng) - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * sqrt(-2.0 * ln(s) / s);
        }
    }
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    mean + sd * sample_std_normal(rng)
}

pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -ln(open01(rng)) / rate
}

/// `ln G` for `G ~ Gamma(shape, 1)`. Working on the log scale keeps draws
/// with tiny shapes (e.g. 0.1) from underflowing to zero.
fn sample_ln_gamma_unit<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape < 1.0 {
        let boosted = sample_ln_gamma_unit(rng, shape + 1.0);
        return boosted + ln(open01(rng)) / shape;
    }
    // Marsaglia & Tsang squeeze
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / sqrt(9.0 * d);
    loop {
        let x = sample_std_normal(rng);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = open01(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || ln(u) < 0.5 * x2 + d - d * v + d * ln(v) {
            return ln(d * v);
        }
    }
}

pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(Error::Domain("gamma shape and scale must be positive"));
    }
    Ok(scale * exp(sample_ln_gamma_unit(rng, shape)))
}

pub(crate) fn inverse_gamma_unchecked<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let ln_scale = ln(scale);
    loop {
        let v = exp(ln_scale - sample_ln_gamma_unit(rng, shape));
        // shape << 1 can push a draw past f64::MAX; such draws carry
        // negligible mass and are redrawn.
        if v.is_finite() && v > 0.0 {
            return v;
        }
    }
}

/// Draw from the inverse-gamma law with density `∝ x^{-shape-1} e^{-scale/x}`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(Error::Domain("inverse-gamma shape and scale must be positive"));
    }
    Ok(inverse_gamma_unchecked(rng, shape, scale))
}

/// Bivariate normal with a precomputed Cholesky factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mvn2 {
    mean: [f64; 2],
    l11: f64,
    l21: f64,
    l22: f64,
}

impl Mvn2 {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let [[a, b], [c, d]] = cov;
        if !(a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let tol = 1e-12 * (a.abs() + d.abs()).max(f64::MIN_POSITIVE);
        if (b - c).abs() > tol || !(a > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let l11 = sqrt(a);
        let l21 = b / l11;
        let rem = d - l21 * l21;
        if !(rem > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { mean, l11, l21, l22: sqrt(rem) })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let z1 = sample_std_normal(rng);
        let z2 = sample_std_normal(rng);
        [self.mean[0] + self.l11 * z1, self.mean[1] + self.l21 * z1 + self.l22 * z2]
    }
}

pub fn sample_mvn2<R: Rng + ?Sized>(mean: [f64; 2], cov: [[f64; 2]; 2], rng: &mut R) -> Result<[f64; 2]> {
    Ok(Mvn2::new(mean, cov)?.sample(rng))
}
