//! Machinery shared by the mixture sampler and the parametric comparator:
//! chain settings, per-observation likelihood caches, the regression and
//! cluster-parameter Metropolis steps, and chain output records.

use crate::math::{exp, ln, sqrt};
use crate::model::{h0_log_density, ClusterParams, Dataset, H0Spec, RegressionParams, ThetaKernel};
use crate::model::{outcome_predictor_unchecked, residual_unchecked};
use crate::stats::{open01, ChainRng};
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Iteration counts and seed for one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainControl {
    pub n_iter: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
}

impl Default for ChainControl {
    fn default() -> Self {
        Self { n_iter: 20_000, burn_in: 5_000, thinning: 10, seed: 1 }
    }
}

impl ChainControl {
    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::InvalidConfig(String::from("thinning must be at least 1")));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::InvalidConfig(format!(
                "burn_in ({}) must be smaller than n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        Ok(())
    }

    /// Number of draws a run keeps.
    pub fn retained(&self) -> u64 {
        self.n_iter.saturating_sub(self.burn_in) / self.thinning.max(1)
    }

    /// Whether zero-based iteration `it` is kept.
    pub fn keeps(&self, it: u64) -> bool {
        it >= self.burn_in && (it - self.burn_in + 1).is_multiple_of(self.thinning)
    }
}

/// Normal prior on one regression coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefPrior {
    pub mean: f64,
    pub var: f64,
}

/// Independent normal priors on the regression coefficients: mean zero with
/// a common variance, except for coordinates overridden by name
/// (`alpha1_1`, `beta1`, `beta2_2`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionPrior {
    pub default_var: f64,
    pub overrides: Vec<(String, CoefPrior)>,
}

impl Default for RegressionPrior {
    fn default() -> Self {
        Self { default_var: 100.0, overrides: Vec::new() }
    }
}

impl RegressionPrior {
    /// Per-coordinate priors in update order for coefficients shaped like
    /// `template`.
    pub fn resolve(&self, template: &RegressionParams) -> Result<Vec<CoefPrior>> {
        if !(self.default_var > 0.0 && self.default_var.is_finite()) {
            return Err(Error::InvalidConfig(String::from("regression prior variance must be positive")));
        }
        let names: Vec<String> = (0..template.n_coords()).map(|i| template.coord_name(i)).collect();
        let mut out = vec![CoefPrior { mean: 0.0, var: self.default_var }; names.len()];
        for (name, prior) in &self.overrides {
            let idx = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown regression coefficient `{name}`")))?;
            if !(prior.var > 0.0 && prior.var.is_finite() && prior.mean.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "prior for `{name}` needs a finite mean and positive variance"
                )));
            }
            out[idx] = *prior;
        }
        Ok(out)
    }
}

/// Base widths of the uniform random-walk proposals for cluster parameters.
/// Each is divided by the square root of the cluster size; the mean widths
/// are also multiplied by the component's standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterWidths {
    pub mu: f64,
    pub log_var: f64,
    pub rho: f64,
}

impl Default for ClusterWidths {
    fn default() -> Self {
        Self { mu: 2.0, log_var: 3.0, rho: 2.0 }
    }
}

/// Settings common to both samplers. The parametric comparator uses
/// exactly this; the mixture sampler adds the Dirichlet-process knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub h0: H0Spec,
    pub reg_prior: RegressionPrior,
    pub proposal_width_beta1: f64,
    pub proposal_width_other: f64,
    pub cluster_widths: ClusterWidths,
    pub control: ChainControl,
    /// Drop the likelihood so the chain targets the prior. Used to check
    /// that every update leaves its prior invariant.
    pub prior_only: bool,
    /// Tune proposal widths during burn-in. Off by default.
    pub adaptation: Option<WidthAdaptation>,
}

/// Burn-in tuning of the proposal widths. After every `batch` burn-in
/// iterations each block's widths are scaled up when its acceptance rate
/// over the batch exceeded `target` and down otherwise, by a step that
/// shrinks as batches accumulate. Widths are frozen once burn-in ends, so
/// the retained draws come from a fixed kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthAdaptation {
    pub target: f64,
    pub batch: u64,
}

impl Default for WidthAdaptation {
    fn default() -> Self {
        Self { target: 0.44, batch: 50 }
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            h0: H0Spec::default(),
            reg_prior: RegressionPrior::default(),
            proposal_width_beta1: 0.0128,
            proposal_width_other: 0.0064,
            cluster_widths: ClusterWidths::default(),
            control: ChainControl::default(),
            prior_only: false,
            adaptation: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        self.h0.validate()?;
        self.control.validate()?;
        let nonneg = |w: f64| w >= 0.0 && w.is_finite();
        if !nonneg(self.proposal_width_beta1) || !nonneg(self.proposal_width_other) {
            return Err(Error::InvalidConfig(String::from(
                "regression proposal widths must be finite and nonnegative",
            )));
        }
        let cw = self.cluster_widths;
        if !(cw.mu > 0.0 && cw.log_var > 0.0 && cw.rho > 0.0) {
            return Err(Error::InvalidConfig(String::from("cluster proposal widths must be positive")));
        }
        if !(self.reg_prior.default_var > 0.0) {
            return Err(Error::InvalidConfig(String::from("regression prior variance must be positive")));
        }
        if let Some(a) = self.adaptation {
            if !(a.target > 0.0 && a.target < 1.0) || a.batch == 0 {
                return Err(Error::InvalidConfig(String::from(
                    "adaptation needs a target in (0, 1) and a positive batch",
                )));
            }
        }
        Ok(())
    }
}

/// How the chain state is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// One cluster at the base-measure means with `ρ = 0`, coefficients at 0.
    #[default]
    SingleCluster,
    /// One cluster drawn from the base measure, coefficients at 0.
    PriorDraw,
    /// Coefficients and the single cluster from least squares on the first
    /// stage and the naive AFT fit on the second.
    AftWarm,
}

/// Metropolis blocks with separately tracked acceptance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Alpha1,
    Alpha2,
    Beta1,
    Beta2,
    Mu,
    LogVar,
    Rho,
    Nu,
}

impl Block {
    pub const ALL: [Block; 8] =
        [Block::Alpha1, Block::Alpha2, Block::Beta1, Block::Beta2, Block::Mu, Block::LogVar, Block::Rho, Block::Nu];

    pub fn name(self) -> &'static str {
        match self {
            Block::Alpha1 => "alpha1",
            Block::Alpha2 => "alpha2",
            Block::Beta1 => "beta1",
            Block::Beta2 => "beta2",
            Block::Mu => "mu",
            Block::LogVar => "log_var",
            Block::Rho => "rho",
            Block::Nu => "nu",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// Accepted and proposed counts per block over the whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptanceRates {
    accepted: [u64; 8],
    proposed: [u64; 8],
}

impl AcceptanceRates {
    pub(crate) fn record(&mut self, block: Block, accepted: bool) {
        self.proposed[block.index()] += 1;
        self.accepted[block.index()] += u64::from(accepted);
    }

    /// Fraction accepted, or `None` if the block never proposed.
    pub fn rate(&self, block: Block) -> Option<f64> {
        let p = self.proposed[block.index()];
        (p > 0).then(|| self.accepted[block.index()] as f64 / p as f64)
    }

    pub fn counts(&self, block: Block) -> (u64, u64) {
        (self.accepted[block.index()], self.proposed[block.index()])
    }

    /// `(name, rate)` for blocks that proposed at least once.
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        Block::ALL.into_iter().filter_map(|b| self.rate(b).map(|r| (b.name(), r)))
    }
}

/// One retained state.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    /// One-based iteration number.
    pub iteration: u64,
    pub reg: RegressionParams,
    /// Concentration parameter; absent for the parametric comparator.
    pub nu: Option<f64>,
    pub sizes: Vec<usize>,
    pub clusters: Vec<ClusterParams>,
}

impl Draw {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }
}

/// Everything a chain run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<Draw>,
    pub acceptance: AcceptanceRates,
    /// Wall-clock seconds, filled in by callers that own a clock.
    pub elapsed_secs: Option<f64>,
}

impl ChainOutput {
    pub fn beta1_trace(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.reg.beta1).collect()
    }

    /// Names of the scalar traces: regression coordinates, then `k` and `nu`
    /// when the chain carries a concentration parameter, then the single
    /// component's parameters when every draw has exactly one cluster.
    pub fn parameter_names(&self) -> Vec<String> {
        let Some(first) = self.draws.first() else { return Vec::new() };
        let mut names: Vec<String> = (0..first.reg.n_coords()).map(|i| first.reg.coord_name(i)).collect();
        if first.nu.is_some() {
            names.push(String::from("k"));
            names.push(String::from("nu"));
        }
        if self.draws.iter().all(|d| d.k() == 1) {
            for n in ["mu1", "mu2", "sigma1_sq", "sigma2_sq", "rho"] {
                names.push(String::from(n));
            }
        }
        names
    }

    /// Trace of a parameter listed by [`ChainOutput::parameter_names`].
    pub fn trace(&self, name: &str) -> Option<Vec<f64>> {
        let first = self.draws.first()?;
        if let Some(i) = (0..first.reg.n_coords()).find(|&i| first.reg.coord_name(i) == name) {
            let c = first.reg.coord(i);
            return Some(self.draws.iter().map(|d| d.reg.get(c)).collect());
        }
        match name {
            "k" if first.nu.is_some() => Some(self.draws.iter().map(|d| d.k() as f64).collect()),
            "nu" => self.draws.iter().map(|d| d.nu).collect(),
            "mu1" | "mu2" | "sigma1_sq" | "sigma2_sq" | "rho" if self.draws.iter().all(|d| d.k() == 1) => {
                let pick = |t: &ClusterParams| match name {
                    "mu1" => t.mu1,
                    "mu2" => t.mu2,
                    "sigma1_sq" => t.sigma1_sq,
                    "sigma2_sq" => t.sigma2_sq,
                    _ => t.rho,
                };
                Some(self.draws.iter().map(|d| pick(&d.clusters[0])).collect())
            }
            _ => None,
        }
    }
}

/// Metropolis accept step on the log scale. Always consumes one uniform so
/// the stream position does not depend on the proposal.
pub(crate) fn accept(rng: &mut ChainRng, log_ratio: f64) -> bool {
    let u = open01(rng);
    !log_ratio.is_nan() && ln(u) < log_ratio
}

/// Difference of two log-likelihood totals where the current one may be
/// `-∞`: moving off `-∞` is always an improvement.
fn loglik_delta(new: f64, old: f64) -> f64 {
    if old == f64::NEG_INFINITY {
        if new == f64::NEG_INFINITY {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        new - old
    }
}

/// Per-observation cached quantities for the current state.
#[derive(Debug, Clone, Default)]
pub(crate) struct Workspace {
    pub e1: Vec<f64>,
    pub lp2: Vec<f64>,
    pub ll: Vec<f64>,
    pub kernels: Vec<ThetaKernel>,
    pub sizes: Vec<usize>,
    scratch: Vec<f64>,
    scratch_ll: Vec<f64>,
}

impl Workspace {
    /// Rebuild every cache from scratch for `reg`, `assignment`, `clusters`.
    pub(crate) fn prepare(
        &mut self,
        data: &Dataset,
        reg: &RegressionParams,
        assignment: &[usize],
        clusters: &[ClusterParams],
        prior_only: bool,
    ) {
        let obs = data.observations();
        self.e1.clear();
        self.lp2.clear();
        self.e1.extend(obs.iter().map(|o| residual_unchecked(o, reg)));
        self.lp2.extend(obs.iter().map(|o| outcome_predictor_unchecked(o, reg)));
        self.kernels.clear();
        self.kernels.extend(clusters.iter().map(ThetaKernel::new));
        self.sizes.clear();
        self.sizes.resize(clusters.len(), 0);
        for &c in assignment {
            self.sizes[c] += 1;
        }
        self.ll.clear();
        if prior_only {
            self.ll.resize(obs.len(), 0.0);
        } else {
            for (i, o) in obs.iter().enumerate() {
                self.ll.push(self.kernels[assignment[i]].loglik(&o.outcome, self.e1[i], self.lp2[i]));
            }
        }
    }

    pub(crate) fn loglik_under(&self, data: &Dataset, i: usize, kernel: &ThetaKernel) -> f64 {
        kernel.loglik(&data.observations()[i].outcome, self.e1[i], self.lp2[i])
    }
}

/// Settings resolved against the data dimensions.
#[derive(Debug, Clone)]
pub(crate) struct Resolved {
    pub n_alpha1: usize,
    pub n_alpha2: usize,
    pub priors: Vec<CoefPrior>,
    pub widths: Vec<f64>,
    pub h0: H0Spec,
    pub cluster_widths: ClusterWidths,
    pub prior_only: bool,
}

impl Resolved {
    pub(crate) fn new(config: &SamplerConfig, data: &Dataset) -> Result<Self> {
        config.validate()?;
        let template = RegressionParams::zeros(data.p(), data.q());
        let priors = config.reg_prior.resolve(&template)?;
        let widths = (0..template.n_coords())
            .map(|i| match template.coord(i) {
                crate::model::Coord::Beta1 => config.proposal_width_beta1,
                _ => config.proposal_width_other,
            })
            .collect();
        Ok(Self {
            n_alpha1: data.q(),
            n_alpha2: data.p(),
            priors,
            widths,
            h0: config.h0,
            cluster_widths: config.cluster_widths,
            prior_only: config.prior_only,
        })
    }
}

/// Running state of [`WidthAdaptation`] for one chain.
#[derive(Debug, Clone, Default)]
pub(crate) struct Adapter {
    last: AcceptanceRates,
    batches: u64,
}

impl Adapter {
    /// Called after iteration `it` (zero-based). Rescales widths at the end
    /// of each burn-in batch; `nu_width` is the concentration proposal
    /// width when the chain has one.
    pub(crate) fn after_iteration(
        &mut self,
        it: u64,
        control: &ChainControl,
        adaptation: Option<WidthAdaptation>,
        settings: &mut Resolved,
        acceptance: &AcceptanceRates,
        nu_width: Option<&mut f64>,
    ) {
        let Some(a) = adaptation else { return };
        if it >= control.burn_in || !(it + 1).is_multiple_of(a.batch) {
            return;
        }
        self.batches += 1;
        let step = (1.0 / sqrt(self.batches as f64)).min(0.25);
        let mut factor = [1.0; 8];
        for b in Block::ALL {
            let (acc, prop) = acceptance.counts(b);
            let (acc0, prop0) = self.last.counts(b);
            if prop > prop0 {
                let rate = (acc - acc0) as f64 / (prop - prop0) as f64;
                factor[b.index()] = exp(if rate > a.target { step } else { -step });
            }
        }
        self.last = *acceptance;
        let template = RegressionParams::zeros(settings.n_alpha2, settings.n_alpha1);
        for (j, w) in settings.widths.iter_mut().enumerate() {
            *w *= factor[coord_block(template.coord(j)).index()];
        }
        settings.cluster_widths.mu *= factor[Block::Mu.index()];
        settings.cluster_widths.log_var *= factor[Block::LogVar.index()];
        settings.cluster_widths.rho *= factor[Block::Rho.index()];
        if let Some(w) = nu_width {
            *w *= factor[Block::Nu.index()];
        }
    }
}

fn coord_block(c: crate::model::Coord) -> Block {
    use crate::model::Coord;
    match c {
        Coord::Alpha1(_) => Block::Alpha1,
        Coord::Alpha2(_) => Block::Alpha2,
        Coord::Beta1 => Block::Beta1,
        Coord::Beta2(_) => Block::Beta2,
    }
}

/// One coordinate-wise random-walk sweep over the regression coefficients.
/// α moves change the first-stage residuals, β moves the second-stage
/// predictor; either way every observation is re-evaluated under its own
/// cluster.
pub(crate) fn update_regression(
    ws: &mut Workspace,
    data: &Dataset,
    reg: &mut RegressionParams,
    assignment: &[usize],
    settings: &Resolved,
    rng: &mut ChainRng,
    acc: &mut AcceptanceRates,
) {
    use crate::model::Coord;
    let obs = data.observations();
    for j in 0..reg.n_coords() {
        let coord = reg.coord(j);
        let cur = reg.get(coord);
        let prop = cur + settings.widths[j] * (open01(rng) - 0.5);
        let prior = settings.priors[j];
        let prior_delta =
            ((cur - prior.mean) * (cur - prior.mean) - (prop - prior.mean) * (prop - prior.mean)) / (2.0 * prior.var);
        if settings.prior_only {
            let ok = accept(rng, prior_delta);
            if ok {
                reg.set(coord, prop);
            }
            acc.record(coord_block(coord), ok);
            continue;
        }
        reg.set(coord, prop);
        let first_stage = !matches!(coord, Coord::Beta1 | Coord::Beta2(_));
        ws.scratch.clear();
        ws.scratch_ll.clear();
        let mut old_total = 0.0;
        let mut new_total = 0.0;
        for (i, o) in obs.iter().enumerate() {
            let kernel = &ws.kernels[assignment[i]];
            let (e1, lp2, v) = if first_stage {
                let e1 = residual_unchecked(o, reg);
                (e1, ws.lp2[i], e1)
            } else {
                let lp2 = outcome_predictor_unchecked(o, reg);
                (ws.e1[i], lp2, lp2)
            };
            let ll = kernel.loglik(&o.outcome, e1, lp2);
            ws.scratch.push(v);
            ws.scratch_ll.push(ll);
            old_total += ws.ll[i];
            new_total += ll;
        }
        let ok = accept(rng, loglik_delta(new_total, old_total) + prior_delta);
        if ok {
            if first_stage {
                core::mem::swap(&mut ws.e1, &mut ws.scratch);
            } else {
                core::mem::swap(&mut ws.lp2, &mut ws.scratch);
            }
            core::mem::swap(&mut ws.ll, &mut ws.scratch_ll);
        } else {
            reg.set(coord, cur);
        }
        acc.record(coord_block(coord), ok);
    }
}

/// Observation indices grouped by cluster, in observation order.
pub(crate) fn members_by_cluster(assignment: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        members[c].push(i);
    }
    members
}

/// Random-walk updates of each cluster's `(μ1, μ2, log σ1², log σ2², ρ)`,
/// one component at a time, against the likelihood of its members and the
/// base-measure prior.
pub(crate) fn update_cluster_params(
    ws: &mut Workspace,
    data: &Dataset,
    assignment: &[usize],
    clusters: &mut [ClusterParams],
    settings: &Resolved,
    rng: &mut ChainRng,
    acc: &mut AcceptanceRates,
) {
    let members = members_by_cluster(assignment, clusters.len());
    let w = settings.cluster_widths;
    for (c, idx) in members.iter().enumerate() {
        assert!(!idx.is_empty(), "cluster {c} has no members");
        let root_n = sqrt(idx.len() as f64);
        for component in 0..5 {
            let cur = clusters[c];
            let mut prop = cur;
            let u = open01(rng) - 0.5;
            let mut log_jacobian = 0.0;
            let block = match component {
                0 => {
                    prop.mu1 = cur.mu1 + w.mu * sqrt(cur.sigma1_sq) / root_n * u;
                    Block::Mu
                }
                1 => {
                    prop.mu2 = cur.mu2 + w.mu * sqrt(cur.sigma2_sq) / root_n * u;
                    Block::Mu
                }
                2 | 3 => {
                    let step = w.log_var / root_n * u;
                    // target on the log scale carries a factor σ²
                    log_jacobian = step;
                    if component == 2 {
                        prop.sigma1_sq = cur.sigma1_sq * crate::math::exp(step);
                    } else {
                        prop.sigma2_sq = cur.sigma2_sq * crate::math::exp(step);
                    }
                    Block::LogVar
                }
                _ => {
                    prop.rho = cur.rho + w.rho / root_n * u;
                    Block::Rho
                }
            };
            if !prop.is_valid() {
                accept(rng, f64::NEG_INFINITY);
                acc.record(block, false);
                continue;
            }
            let prior_delta = h0_log_density(&prop, &settings.h0) - h0_log_density(&cur, &settings.h0);
            let kernel = ThetaKernel::new(&prop);
            ws.scratch_ll.clear();
            let (mut old_total, mut new_total) = (0.0, 0.0);
            if !settings.prior_only {
                for &i in idx {
                    let ll = ws.loglik_under(data, i, &kernel);
                    ws.scratch_ll.push(ll);
                    old_total += ws.ll[i];
                    new_total += ll;
                }
            }
            let ok = accept(rng, loglik_delta(new_total, old_total) + prior_delta + log_jacobian);
            if ok {
                clusters[c] = prop;
                ws.kernels[c] = kernel;
                if !settings.prior_only {
                    for (&i, &ll) in idx.iter().zip(&ws.scratch_ll) {
                        ws.ll[i] = ll;
                    }
                }
            }
            acc.record(block, ok);
        }
    }
}
