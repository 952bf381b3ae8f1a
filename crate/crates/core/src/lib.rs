//! Two-stage Bayesian instrumental-variable estimation for partly
//! interval-censored time-to-event outcomes.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//! special functions and samplers ([`stats`]), the censored two-stage
//! likelihood ([`model`]), the Dirichlet-process-mixture sampler
//! ([`dpmiv`]), the parametric bivariate-normal comparator ([`pbiv`]), the
//! naive log-normal AFT baseline ([`aft`]), the simulation harness
//! ([`sim`]) and posterior diagnostics ([`diagnostics`]). File formats, the
//! CLI and multi-threaded orchestration live in the companion `dpmiv` crate.
#![no_std]
// Negated comparisons are how NaN inputs get rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::excessive_precision, clippy::too_many_arguments))]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
mod math;
mod mcmc;

pub mod aft;
pub mod diagnostics;
pub mod dpmiv;
pub mod model;
pub mod pbiv;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
