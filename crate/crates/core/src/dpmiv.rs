//! Dirichlet-process-mixture instrumental-variable sampler.
//!
//! The bivariate error `(ξ1, ξ2)` follows a Dirichlet-process mixture of
//! bivariate normals with concentration `ν`. Each iteration updates, in
//! order: the regression coefficients (coordinate-wise random-walk
//! Metropolis), the cluster assignments (Neal's auxiliary-parameter
//! algorithm 8, since the base measure is not conjugate), the cluster
//! parameters (random-walk Metropolis), and `ν` (random-walk Metropolis
//! against the Antoniak marginal of the cluster count and a power prior on
//! `(ν_lo, ν_hi)`).
//!
//! Two random streams are derived from the chain seed: one drives the
//! regression and cluster-parameter moves, the other the assignments and
//! `ν`. With `ν` pinned near zero no new cluster opens and the first stream
//! reproduces the parametric comparator's trajectory draw for draw.

use crate::math::{exp, lgamma, ln};
use crate::mcmc::{self, accept, Adapter, Resolved, Workspace};
use crate::model::{sample_theta_h0, ClusterParams, Dataset, RegressionParams, ThetaKernel};
use crate::stats::{derive_seed, open01, seeded_rng, ChainRng};
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use crate::mcmc::{
    AcceptanceRates, Block, ChainControl, ChainOutput, ClusterWidths, CoefPrior, Draw, InitMode, RegressionPrior,
    SamplerConfig, WidthAdaptation,
};

/// Stream indices under the chain seed.
pub(crate) const MH_STREAM: u64 = 0;
pub(crate) const PARTITION_STREAM: u64 = 1;
pub(crate) const INIT_STREAM: u64 = 2;

/// Mixture-sampler settings: the shared sampler settings plus the
/// Dirichlet-process knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct DpmivConfig {
    pub sampler: SamplerConfig,
    /// Auxiliary components per reassignment.
    pub m_aux: usize,
    pub nu_lo: f64,
    pub nu_hi: f64,
    /// Shape of the prior `p(ν) ∝ (ν_hi - ν)^ω` on `(ν_lo, ν_hi)`.
    pub omega: f64,
    pub nu_proposal_width: f64,
}

impl Default for DpmivConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            m_aux: 3,
            nu_lo: 0.1,
            nu_hi: 4.8,
            omega: 1.0,
            nu_proposal_width: 0.25,
        }
    }
}

impl DpmivConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.m_aux == 0 {
            return Err(Error::InvalidConfig(String::from("m_aux must be at least 1")));
        }
        if !(self.nu_lo >= 0.0 && self.nu_lo < self.nu_hi && self.nu_hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("need 0 <= nu_lo < nu_hi, got ({}, {})", self.nu_lo, self.nu_hi)));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidConfig(String::from("omega must be nonnegative")));
        }
        if !(self.nu_proposal_width > 0.0 && self.nu_proposal_width.is_finite()) {
            return Err(Error::InvalidConfig(String::from("nu proposal width must be positive")));
        }
        Ok(())
    }

    /// Log prior density of `ν` up to a constant; `-∞` outside the support.
    pub fn log_nu_prior(&self, nu: f64) -> f64 {
        if !(nu > self.nu_lo && nu < self.nu_hi) {
            return f64::NEG_INFINITY;
        }
        if self.omega == 0.0 {
            0.0
        } else {
            self.omega * ln(self.nu_hi - nu)
        }
    }
}

/// Full sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct DpmState {
    pub reg: RegressionParams,
    /// Cluster id of each observation.
    pub assignment: Vec<usize>,
    pub clusters: Vec<ClusterParams>,
    pub nu: f64,
}

impl DpmState {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.clusters.len()];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Checks the structural invariants: every id in range, every cluster
    /// occupied, valid parameters.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.assignment.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.assignment.len() });
        }
        if self.clusters.is_empty() {
            return Err(Error::Empty("cluster list"));
        }
        if let Some(&id) = self.assignment.iter().find(|&&c| c >= self.clusters.len()) {
            return Err(Error::DanglingCluster { id, k: self.clusters.len() });
        }
        if self.sizes().contains(&0) {
            return Err(Error::InvalidConfig(String::from("every cluster must have at least one member")));
        }
        if !self.clusters.iter().all(ClusterParams::is_valid) || !self.reg.is_finite() {
            return Err(Error::Domain("invalid state parameters"));
        }
        Ok(())
    }

    /// Renames cluster `c` to `perm[c]`.
    pub fn permute_labels(&mut self, perm: &[usize]) -> Result<()> {
        let k = self.clusters.len();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || core::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidConfig(String::from("label permutation must be a bijection on 0..k")));
        }
        let mut clusters = self.clusters.clone();
        for (old, &new) in perm.iter().enumerate() {
            clusters[new] = self.clusters[old];
        }
        self.clusters = clusters;
        for c in &mut self.assignment {
            *c = perm[*c];
        }
        Ok(())
    }

    /// Relabels clusters in order of first appearance in the assignment.
    pub(crate) fn canonicalize(&mut self) {
        let k = self.clusters.len();
        let mut map = vec![usize::MAX; k];
        let mut next = 0;
        for &c in &self.assignment {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
        }
        if map.iter().enumerate().all(|(i, &m)| i == m) {
            return;
        }
        self.permute_labels(&map).expect("first-occurrence map is a bijection");
    }
}

/// Initial state for `data`.
pub fn init_state(data: &Dataset, config: &DpmivConfig, mode: InitMode) -> Result<DpmState> {
    config.validate()?;
    let (reg, theta) = initial_point(data, &config.sampler, mode)?;
    Ok(DpmState {
        reg,
        assignment: vec![0; data.len()],
        clusters: vec![theta],
        nu: 0.5 * (config.nu_lo + config.nu_hi),
    })
}

/// Starting coefficients and single cluster shared by both samplers.
pub(crate) fn initial_point(
    data: &Dataset,
    config: &SamplerConfig,
    mode: InitMode,
) -> Result<(RegressionParams, ClusterParams)> {
    let h0 = &config.h0;
    let v0 = h0.variance_start();
    match mode {
        InitMode::SingleCluster => Ok((
            RegressionParams::zeros(data.p(), data.q()),
            ClusterParams::new(h0.mu1_mean, h0.mu2_mean, v0, v0, 0.0)?,
        )),
        InitMode::PriorDraw => {
            let mut rng = seeded_rng(derive_seed(config.control.seed, INIT_STREAM));
            Ok((RegressionParams::zeros(data.p(), data.q()), sample_theta_h0(h0, &mut rng)))
        }
        InitMode::AftWarm => {
            let (a0, alpha1, alpha2, var1) = crate::aft::first_stage_ols(data)?;
            let fit = crate::aft::fit_aft(data)?;
            let reg = RegressionParams { alpha1, alpha2, beta1: fit.coef_x, beta2: fit.coef_z.clone() };
            let theta = ClusterParams::new(a0, fit.intercept, var1.max(1e-8), (fit.scale * fit.scale).max(1e-8), 0.0)?;
            Ok((reg, theta))
        }
    }
}

/// A running mixture chain. Holds the state, both random streams and the
/// acceptance counters; [`DpmivChain::sweep`] advances one iteration.
#[derive(Debug, Clone)]
pub struct DpmivChain {
    config: DpmivConfig,
    settings: Resolved,
    state: DpmState,
    mh_rng: ChainRng,
    partition_rng: ChainRng,
    acceptance: AcceptanceRates,
    ws: Workspace,
    aux: Vec<ClusterParams>,
    aux_kernels: Vec<ThetaKernel>,
    log_weights: Vec<f64>,
    cand_ll: Vec<f64>,
}

impl DpmivChain {
    pub fn new(data: &Dataset, config: &DpmivConfig, mode: InitMode) -> Result<Self> {
        let state = init_state(data, config, mode)?;
        Self::from_state(data, config, state)
    }

    /// Resumes from an explicit state.
    pub fn from_state(data: &Dataset, config: &DpmivConfig, state: DpmState) -> Result<Self> {
        config.validate()?;
        state.reg.check_dims(data.p(), data.q())?;
        state.validate(data.len())?;
        let settings = Resolved::new(&config.sampler, data)?;
        let seed = config.sampler.control.seed;
        Ok(Self {
            config: config.clone(),
            settings,
            state,
            mh_rng: seeded_rng(derive_seed(seed, MH_STREAM)),
            partition_rng: seeded_rng(derive_seed(seed, PARTITION_STREAM)),
            acceptance: AcceptanceRates::default(),
            ws: Workspace::default(),
            aux: Vec::new(),
            aux_kernels: Vec::new(),
            log_weights: Vec::new(),
            cand_ll: Vec::new(),
        })
    }

    pub fn state(&self) -> &DpmState {
        &self.state
    }

    /// Mutable access for relabeling experiments. The next sweep checks the
    /// invariants again.
    pub fn state_mut(&mut self) -> &mut DpmState {
        &mut self.state
    }

    pub fn acceptance(&self) -> &AcceptanceRates {
        &self.acceptance
    }

    /// One full iteration against `data`, which may differ from the data
    /// of previous sweeps as long as its shape matches.
    pub fn sweep(&mut self, data: &Dataset) -> Result<()> {
        self.state.reg.check_dims(data.p(), data.q())?;
        self.state.validate(data.len())?;
        self.state.canonicalize();
        let s = &mut self.state;
        self.ws.prepare(data, &s.reg, &s.assignment, &s.clusters, self.settings.prior_only);
        mcmc::update_regression(
            &mut self.ws,
            data,
            &mut s.reg,
            &s.assignment,
            &self.settings,
            &mut self.mh_rng,
            &mut self.acceptance,
        );
        self.update_assignments(data);
        let s = &mut self.state;
        mcmc::update_cluster_params(
            &mut self.ws,
            data,
            &s.assignment,
            &mut s.clusters,
            &self.settings,
            &mut self.mh_rng,
            &mut self.acceptance,
        );
        self.update_nu(data.len());
        Ok(())
    }

    /// Neal's algorithm 8 with `m_aux` auxiliary components.
    fn update_assignments(&mut self, data: &Dataset) {
        let m = self.config.m_aux;
        let prior_only = self.settings.prior_only;
        let log_aux_weight = ln(self.state.nu / m as f64);
        for i in 0..data.len() {
            let old = self.state.assignment[i];
            self.ws.sizes[old] -= 1;
            let singleton = self.ws.sizes[old] == 0;

            self.aux.clear();
            self.aux_kernels.clear();
            if singleton {
                self.aux.push(self.state.clusters[old]);
                self.aux_kernels.push(self.ws.kernels[old]);
            }
            while self.aux.len() < m {
                let t = sample_theta_h0(&self.settings.h0, &mut self.partition_rng);
                self.aux.push(t);
                self.aux_kernels.push(ThetaKernel::new(&t));
            }

            let k = self.state.clusters.len();
            self.log_weights.clear();
            self.cand_ll.clear();
            for c in 0..k {
                let size = self.ws.sizes[c];
                let ll = if size == 0 || prior_only { 0.0 } else { self.ws.loglik_under(data, i, &self.ws.kernels[c]) };
                let w = if size == 0 { f64::NEG_INFINITY } else { ln(size as f64) + ll };
                self.cand_ll.push(ll);
                self.log_weights.push(w);
            }
            for kernel in &self.aux_kernels {
                let ll = if prior_only { 0.0 } else { self.ws.loglik_under(data, i, kernel) };
                self.cand_ll.push(ll);
                self.log_weights.push(log_aux_weight + ll);
            }
            let choice = sample_log_categorical(&self.log_weights, &mut self.partition_rng);
            self.ws.ll[i] = self.cand_ll[choice];

            if choice < k {
                self.state.assignment[i] = choice;
                self.ws.sizes[choice] += 1;
                if singleton {
                    self.remove_cluster(old);
                }
            } else {
                let j = choice - k;
                let (theta, kernel) = (self.aux[j], self.aux_kernels[j]);
                if singleton {
                    self.state.clusters[old] = theta;
                    self.ws.kernels[old] = kernel;
                    self.ws.sizes[old] = 1;
                } else {
                    self.state.clusters.push(theta);
                    self.ws.kernels.push(kernel);
                    self.ws.sizes.push(1);
                    self.state.assignment[i] = k;
                }
            }
        }
    }

    fn remove_cluster(&mut self, c: usize) {
        self.state.clusters.remove(c);
        self.ws.kernels.remove(c);
        self.ws.sizes.remove(c);
        for a in &mut self.state.assignment {
            if *a > c {
                *a -= 1;
            }
        }
    }

    fn update_nu(&mut self, n: usize) {
        let cfg = &self.config;
        let k = self.state.clusters.len() as f64;
        let n = n as f64;
        let target = |nu: f64| cfg.log_nu_prior(nu) + k * ln(nu) + lgamma(nu) - lgamma(nu + n);
        let cur = self.state.nu;
        let prop = cur + cfg.nu_proposal_width * (open01(&mut self.partition_rng) - 0.5);
        let ok = if prop > cfg.nu_lo && prop < cfg.nu_hi {
            accept(&mut self.partition_rng, target(prop) - target(cur))
        } else {
            accept(&mut self.partition_rng, f64::NEG_INFINITY)
        };
        if ok {
            self.state.nu = prop;
        }
        self.acceptance.record(Block::Nu, ok);
    }

    fn snapshot(&self, iteration: u64) -> Draw {
        Draw {
            iteration,
            reg: self.state.reg.clone(),
            nu: Some(self.state.nu),
            sizes: self.ws.sizes.clone(),
            clusters: self.state.clusters.clone(),
        }
    }

    /// Runs the configured number of iterations, keeping draws after
    /// burn-in at the thinning interval.
    pub fn run(mut self, data: &Dataset) -> Result<ChainOutput> {
        let control = self.config.sampler.control;
        let adaptation = self.config.sampler.adaptation;
        let mut adapter = Adapter::default();
        let mut draws = Vec::with_capacity(control.retained() as usize);
        for it in 0..control.n_iter {
            self.sweep(data)?;
            adapter.after_iteration(
                it,
                &control,
                adaptation,
                &mut self.settings,
                &self.acceptance,
                Some(&mut self.config.nu_proposal_width),
            );
            if control.keeps(it) {
                draws.push(self.snapshot(it + 1));
            }
        }
        Ok(ChainOutput { draws, acceptance: self.acceptance, elapsed_secs: None })
    }
}

/// Index drawn with probability proportional to `exp(log_weights)`.
pub(crate) fn sample_log_categorical(log_weights: &[f64], rng: &mut ChainRng) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let u = open01(rng);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return ((u * log_weights.len() as f64) as usize).min(log_weights.len() - 1);
    }
    let total: f64 = log_weights.iter().map(|&w| exp(w - max)).sum();
    let mut target = u * total;
    let mut last = 0;
    for (i, &w) in log_weights.iter().enumerate() {
        let p = exp(w - max);
        if p > 0.0 {
            last = i;
            if target < p {
                return i;
            }
            target -= p;
        }
    }
    last
}

/// Runs one mixture chain from `mode`.
pub fn run_chain(data: &Dataset, config: &DpmivConfig, mode: InitMode) -> Result<ChainOutput> {
    DpmivChain::new(data, config, mode)?.run(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Observation, Outcome};
    use crate::stats::sample_normal;

    fn toy_data(n: usize, seed: u64) -> Dataset {
        let mut rng = seeded_rng(seed);
        let obs = (0..n)
            .map(|i| {
                let g = vec![sample_normal(&mut rng, 0.0, 1.0)];
                let z = vec![sample_normal(&mut rng, 0.0, 1.0)];
                let e = if i % 2 == 0 { -1.5 } else { 1.5 };
                let x = 0.5 * g[0] + 0.3 * z[0] + e + 0.3 * sample_normal(&mut rng, 0.0, 1.0);
                let y = -x + 0.8 * z[0] - e + 0.3 * sample_normal(&mut rng, 0.0, 1.0);
                let outcome = match i % 3 {
                    0 => Outcome::Exact(y),
                    1 => Outcome::Interval(y - 0.5, y + 0.3),
                    _ => Outcome::Right(y - 0.2),
                };
                Observation::new(outcome, x, z, g).unwrap()
            })
            .collect();
        Dataset::new(obs).unwrap()
    }

    fn short_config(seed: u64) -> DpmivConfig {
        let mut c = DpmivConfig::default();
        c.sampler.control = ChainControl { n_iter: 200, burn_in: 100, thinning: 2, seed };
        c
    }

    #[test]
    fn invariants_hold_after_every_sweep() {
        let data = toy_data(60, 1);
        let config = short_config(3);
        let mut chain = DpmivChain::new(&data, &config, InitMode::SingleCluster).unwrap();
        let mut max_k = 1;
        for _ in 0..300 {
            chain.sweep(&data).unwrap();
            let s = chain.state();
            s.validate(data.len()).unwrap();
            assert_eq!(s.sizes().iter().sum::<usize>(), data.len());
            assert!(s.nu > config.nu_lo && s.nu < config.nu_hi);
            assert_eq!(chain.ws.sizes, s.sizes());
            for (i, o) in data.observations().iter().enumerate() {
                let direct = crate::model::obs_loglik(o, &s.reg, &s.clusters[s.assignment[i]]).unwrap();
                assert_eq!(chain.ws.ll[i], direct);
            }
            max_k = max_k.max(s.k());
        }
        assert!(max_k >= 2);
    }

    #[test]
    fn same_seed_same_output() {
        let data = toy_data(30, 2);
        let a = run_chain(&data, &short_config(9), InitMode::SingleCluster).unwrap();
        let b = run_chain(&data, &short_config(9), InitMode::SingleCluster).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&data, &short_config(10), InitMode::SingleCluster).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn retained_draw_count() {
        let data = toy_data(10, 2);
        let mut config = short_config(1);
        config.sampler.control = ChainControl { n_iter: 50, burn_in: 49, thinning: 1, seed: 1 };
        let out = run_chain(&data, &config, InitMode::SingleCluster).unwrap();
        assert_eq!(out.draws.len(), 1);
        assert_eq!(out.draws[0].iteration, 50);
        config.sampler.control = ChainControl { n_iter: 57, burn_in: 7, thinning: 5, seed: 1 };
        assert_eq!(run_chain(&data, &config, InitMode::SingleCluster).unwrap().draws.len(), 10);
    }

    #[test]
    fn zero_width_regression_moves_always_accept() {
        let data = toy_data(20, 4);
        let mut config = short_config(2);
        config.sampler.proposal_width_beta1 = 0.0;
        config.sampler.proposal_width_other = 0.0;
        let out = run_chain(&data, &config, InitMode::SingleCluster).unwrap();
        assert_eq!(out.acceptance.rate(Block::Beta1), Some(1.0));
        assert_eq!(out.acceptance.rate(Block::Alpha1), Some(1.0));
        assert!(out.draws.iter().all(|d| d.reg == RegressionParams::zeros(1, 1)));
    }

    #[test]
    fn tiny_concentration_keeps_one_cluster() {
        let data = toy_data(40, 5);
        let mut config = short_config(6);
        config.nu_lo = 1e-300;
        config.nu_hi = 2e-300;
        config.sampler.control = ChainControl { n_iter: 10_000, burn_in: 0, thinning: 1, seed: 6 };
        let mut chain = DpmivChain::new(&data, &config, InitMode::SingleCluster).unwrap();
        for _ in 0..10_000 {
            chain.sweep(&data).unwrap();
            assert_eq!(chain.state().k(), 1);
        }
    }

    #[test]
    fn relabeling_leaves_trajectory_unchanged() {
        let data = toy_data(40, 7);
        let config = short_config(8);
        let mut a = DpmivChain::new(&data, &config, InitMode::SingleCluster).unwrap();
        for _ in 0..50 {
            a.sweep(&data).unwrap();
        }
        let mut b = a.clone();
        while b.state().k() < 2 {
            a.sweep(&data).unwrap();
            b.sweep(&data).unwrap();
        }
        let k = b.state().k();
        let perm: Vec<usize> = (0..k).rev().collect();
        b.state_mut().permute_labels(&perm).unwrap();
        assert_ne!(a.state().assignment, b.state().assignment);
        for _ in 0..50 {
            a.sweep(&data).unwrap();
            b.sweep(&data).unwrap();
            assert_eq!(a.state().reg.beta1.to_bits(), b.state().reg.beta1.to_bits());
        }
    }

    #[test]
    fn nu_follows_cluster_count() {
        // with k = n the target favors large ν; with k = 1 small ν
        let data = toy_data(30, 1);
        let config = short_config(1);
        let mean_nu = |k: usize| {
            let mut state = init_state(&data, &config, InitMode::SingleCluster).unwrap();
            state.assignment = (0..data.len()).map(|i| i % k).collect();
            state.clusters = vec![state.clusters[0]; k];
            let mut chain = DpmivChain::from_state(&data, &config, state).unwrap();
            let mut sum = 0.0;
            for _ in 0..10_000 {
                chain.update_nu(data.len());
                sum += chain.state.nu;
            }
            sum / 10_000.0
        };
        let low = mean_nu(1);
        let high = mean_nu(data.len());
        assert!(low < 1.0 && high > 3.0, "{low} {high}");
    }

    #[test]
    fn log_categorical_edge_cases() {
        let mut rng = seeded_rng(1);
        assert_eq!(sample_log_categorical(&[f64::NEG_INFINITY, 0.0], &mut rng), 1);
        assert_eq!(sample_log_categorical(&[-1e300, f64::NEG_INFINITY], &mut rng), 0);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[sample_log_categorical(&[0.0, 2f64.ln(), f64::NEG_INFINITY], &mut rng)] += 1;
        }
        assert_eq!(counts[2], 0);
        assert!((counts[1] as f64 / 30_000.0 - 2.0 / 3.0).abs() < 0.015);
    }

    #[test]
    fn config_validation() {
        let mut c = DpmivConfig::default();
        assert!(c.validate().is_ok());
        c.nu_lo = 5.0;
        assert!(c.validate().is_err());
        let c = DpmivConfig { m_aux: 0, ..DpmivConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn permutation_must_be_bijection() {
        let data = toy_data(10, 1);
        let mut s = init_state(&data, &DpmivConfig::default(), InitMode::SingleCluster).unwrap();
        assert!(s.permute_labels(&[1]).is_err());
        assert!(s.permute_labels(&[0]).is_ok());
    }
}
