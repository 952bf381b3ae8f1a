//! Data and parameter types for the two-stage instrumental-variable model
//!
//! ```text
//! x_i = α1'g_i + α2'z_i + ξ1_i
//! y_i = β1 x_i + β2'z_i + ξ2_i
//! ```
//!
//! with `(ξ1, ξ2)` bivariate normal given the observation's cluster
//! parameters. Intercepts are absorbed into the error means `(μ1, μ2)`.
//! Outcomes live on the log-time scale.

mod likelihood;
mod types;

pub use likelihood::{
    dataset_loglik, first_stage_residual, h0_log_density, obs_loglik, sample_theta_h0, second_stage_conditional,
};
pub(crate) use likelihood::{outcome_predictor_unchecked, residual_unchecked, ThetaKernel};
pub use types::{CensoringCode, ClusterParams, Coord, Dataset, H0Spec, Observation, Outcome, RegressionParams};
