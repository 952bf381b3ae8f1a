//! Parametric Bayesian instrumental-variable comparator: the same two-stage
//! model with one bivariate-normal error shared by every observation.
//!
//! It runs the mixture sampler's regression and cluster-parameter moves on
//! a single fixed cluster, so likelihood changes reach both samplers and a
//! mixture chain with a vanishing concentration reproduces it exactly.

use crate::dpmiv::{initial_point, MH_STREAM};
use crate::mcmc::{self, Adapter, Resolved, Workspace};
use crate::model::{ClusterParams, Dataset, RegressionParams};
use crate::stats::{derive_seed, seeded_rng, ChainRng};
use crate::Result;
use alloc::vec;
use alloc::vec::Vec;

pub use crate::mcmc::{AcceptanceRates, ChainControl, ChainOutput, Draw, InitMode, SamplerConfig, WidthAdaptation};

/// The comparator needs nothing beyond the shared settings.
pub type PbivConfig = SamplerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PbivState {
    pub reg: RegressionParams,
    pub theta: ClusterParams,
}

/// A running parametric chain.
#[derive(Debug, Clone)]
pub struct PbivChain {
    config: PbivConfig,
    settings: Resolved,
    reg: RegressionParams,
    clusters: [ClusterParams; 1],
    assignment: Vec<usize>,
    rng: ChainRng,
    acceptance: AcceptanceRates,
    ws: Workspace,
}

impl PbivChain {
    pub fn new(data: &Dataset, config: &PbivConfig, mode: InitMode) -> Result<Self> {
        let settings = Resolved::new(config, data)?;
        let (reg, theta) = initial_point(data, config, mode)?;
        Ok(Self {
            config: config.clone(),
            settings,
            reg,
            clusters: [theta],
            assignment: vec![0; data.len()],
            rng: seeded_rng(derive_seed(config.control.seed, MH_STREAM)),
            acceptance: AcceptanceRates::default(),
            ws: Workspace::default(),
        })
    }

    pub fn state(&self) -> PbivState {
        PbivState { reg: self.reg.clone(), theta: self.clusters[0] }
    }

    /// One iteration: regression coefficients, then the five error
    /// parameters.
    pub fn sweep(&mut self, data: &Dataset) -> Result<()> {
        self.reg.check_dims(data.p(), data.q())?;
        self.assignment.resize(data.len(), 0);
        self.ws.prepare(data, &self.reg, &self.assignment, &self.clusters, self.settings.prior_only);
        mcmc::update_regression(
            &mut self.ws,
            data,
            &mut self.reg,
            &self.assignment,
            &self.settings,
            &mut self.rng,
            &mut self.acceptance,
        );
        mcmc::update_cluster_params(
            &mut self.ws,
            data,
            &self.assignment,
            &mut self.clusters,
            &self.settings,
            &mut self.rng,
            &mut self.acceptance,
        );
        Ok(())
    }

    pub fn run(mut self, data: &Dataset) -> Result<ChainOutput> {
        let control = self.config.control;
        let adaptation = self.config.adaptation;
        let mut adapter = Adapter::default();
        let mut draws = Vec::with_capacity(control.retained() as usize);
        for it in 0..control.n_iter {
            self.sweep(data)?;
            adapter.after_iteration(it, &control, adaptation, &mut self.settings, &self.acceptance, None);
            if control.keeps(it) {
                draws.push(Draw {
                    iteration: it + 1,
                    reg: self.reg.clone(),
                    nu: None,
                    sizes: vec![data.len()],
                    clusters: self.clusters.to_vec(),
                });
            }
        }
        Ok(ChainOutput { draws, acceptance: self.acceptance, elapsed_secs: None })
    }
}

/// Runs one parametric chain from `mode`.
pub fn run_pbiv_chain(data: &Dataset, config: &PbivConfig, mode: InitMode) -> Result<ChainOutput> {
    PbivChain::new(data, config, mode)?.run(data)
}
