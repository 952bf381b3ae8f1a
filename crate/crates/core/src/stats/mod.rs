//! Special functions, log-space densities and seeded samplers shared by the
//! samplers and the simulation harness.
//!
//! Every transcendental call goes through `libm`, and every random variate is
//! built from raw `u64` output of a [`ChainRng`], so a given seed yields the
//! same stream on every platform.

mod antoniak;
mod bivexp;
mod normal;
mod sampling;

pub use antoniak::{antoniak_log_pmf, antoniak_log_pmf_all, log_stirling_first_row};
pub use bivexp::{biv_exponential_log_pdf, ln_bessel_i0, sample_biv_exponential, BivExpParams};
pub use normal::{
    log_inv_gamma_pdf, log_normal_interval_prob, log_normal_pdf, std_normal_cdf, std_normal_log_cdf, std_normal_log_sf,
    std_normal_pdf, std_normal_sf,
};
pub use sampling::{
    derive_seed, sample_exponential, sample_gamma, sample_inverse_gamma, sample_mvn2, sample_normal, sample_std_normal,
    sample_uniform, seeded_rng, ChainRng, Mvn2,
};

pub(crate) use sampling::{inverse_gamma_unchecked, open01};
