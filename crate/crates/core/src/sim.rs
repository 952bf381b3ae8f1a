//! Simulation scenarios, the censoring mechanism, and the replication
//! engine that scores estimators of `β1` by bias, spread and coverage.

use crate::aft::fit_aft;
use crate::diagnostics::quantile_sorted;
use crate::dpmiv::{DpmivChain, DpmivConfig};
use crate::math::{exp, ln, sqrt};
use crate::mcmc::{ChainOutput, InitMode};
use crate::model::{ClusterParams, Dataset, Observation, Outcome, RegressionParams};
use crate::pbiv::PbivChain;
use crate::stats::{
    derive_seed, open01, sample_biv_exponential, sample_exponential, sample_normal, seeded_rng, BivExpParams, ChainRng,
    Mvn2,
};
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// True causal effect in every built-in scenario.
pub const TRUE_BETA1: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub proportion: f64,
    pub theta: ClusterParams,
}

/// Joint law of the error pair `(ξ1, ξ2)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorModel {
    MixtureOfNormals(Vec<MixtureComponent>),
    BivariateExponential(BivExpParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub error_model: ErrorModel,
    pub true_reg: RegressionParams,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.true_reg.is_finite() {
            return Err(Error::NonFinite("true regression coefficients"));
        }
        match &self.error_model {
            ErrorModel::MixtureOfNormals(comps) => {
                if comps.is_empty() {
                    return Err(Error::Empty("mixture components"));
                }
                if comps.iter().any(|c| !(c.proportion > 0.0) || !c.theta.is_valid()) {
                    return Err(Error::InvalidConfig(String::from(
                        "mixture components need positive proportions and valid parameters",
                    )));
                }
                let total: f64 = comps.iter().map(|c| c.proportion).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidConfig(format!("mixture proportions sum to {total}, not 1")));
                }
            }
            ErrorModel::BivariateExponential(p) => p.validate()?,
        }
        Ok(())
    }
}

/// How outcomes are censored.
///
/// A subject is observed exactly with probability `exact_fraction`.
/// Otherwise an inspection window `[L, L + gap]` is drawn on the time scale
/// with exponential `L` and gap, and the event time `exp(y)` is reported as
/// before, inside or after the window. Bounds are stored on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensoringSpec {
    pub exact_fraction: f64,
    pub rate_l: f64,
    pub rate_gap: f64,
}

impl Default for CensoringSpec {
    fn default() -> Self {
        Self { exact_fraction: 0.25, rate_l: 2.0, rate_gap: 2.0 }
    }
}

impl CensoringSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.exact_fraction) || !(self.rate_l > 0.0) || !(self.rate_gap > 0.0) {
            return Err(Error::InvalidConfig(String::from(
                "censoring needs exact_fraction in [0, 1] and positive rates",
            )));
        }
        Ok(())
    }
}

fn truth_reg() -> RegressionParams {
    RegressionParams { alpha1: vec![0.5, 0.5], alpha2: vec![0.5, 0.5], beta1: TRUE_BETA1, beta2: vec![0.8, 0.8] }
}

fn mixture(rows: &[(f64, f64, f64, f64, f64, f64)]) -> ErrorModel {
    ErrorModel::MixtureOfNormals(
        rows.iter()
            .map(|&(proportion, mu1, sigma1_sq, mu2, sigma2_sq, rho)| MixtureComponent {
                proportion,
                theta: ClusterParams { mu1, mu2, sigma1_sq, sigma2_sq, rho },
            })
            .collect(),
    )
}

/// The six built-in error scenarios:
///
/// 1. bivariate normal;
/// 2. bivariate exponential;
/// 3. two normals with opposite means and a shared covariance;
/// 4. two normals with a shared mean and different covariances;
/// 5. and 6. five-component mixtures shaped like fitted cohort errors.
pub fn builtin_scenario(id: u32) -> Result<ScenarioSpec> {
    // (proportion, μ1, σ1², μ2, σ2², ρ)
    let error_model = match id {
        1 => mixture(&[(1.0, 0.5, 0.5, 0.5, 1.0, 0.424)]),
        2 => ErrorModel::BivariateExponential(BivExpParams { sigma1: 0.3, sigma2: 0.3, rho: 0.3 }),
        3 => mixture(&[(0.5, 0.63, 0.3, -0.63, 0.3, 0.5), (0.5, -0.63, 0.3, 0.63, 0.3, 0.5)]),
        4 => mixture(&[(0.5, 0.0, 0.7, 0.0, 0.7, 0.357), (0.5, 0.0, 0.05, 0.0, 0.05, 0.6)]),
        5 => mixture(&[
            (0.72, 1.882, 0.015, 1.511, 1.110, 0.107),
            (0.18, 1.783, 0.022, -2.370, 0.204, -0.081),
            (0.05, 1.260, 0.112, 1.265, 0.226, 0.996),
            (0.03, 1.941, 0.095, 1.128, 0.493, 0.345),
            (0.02, 1.922, 0.052, -0.701, 2.347, 0.401),
        ]),
        6 => mixture(&[
            (0.5, 4.985, 0.015, 5.011, 0.966, 0.076),
            (0.2, 4.585, 0.024, 4.265, 0.177, -0.051),
            (0.1, 4.830, 0.103, 5.265, 0.255, 0.878),
            (0.1, 4.983, 0.084, 5.256, 0.633, 0.484),
            (0.1, 4.924, 0.055, 3.880, 2.264, 0.670),
        ]),
        other => return Err(Error::UnknownScenario(other)),
    };
    Ok(ScenarioSpec { error_model, true_reg: truth_reg() })
}

/// Censoring outcome for a log event time `y`.
pub fn apply_censoring(y: f64, cens: &CensoringSpec, rng: &mut ChainRng) -> Outcome {
    if open01(rng) < cens.exact_fraction {
        return Outcome::Exact(y);
    }
    let left = sample_exponential(rng, cens.rate_l);
    let right = left + sample_exponential(rng, cens.rate_gap);
    let t = exp(y);
    if t < left {
        Outcome::Left(ln(left))
    } else if t <= right {
        Outcome::Interval(ln(left), ln(right))
    } else {
        Outcome::Right(ln(right))
    }
}

/// Quantities a simulated dataset hides from the estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub beta1: f64,
    /// Uncensored log event times.
    pub y: Vec<f64>,
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
    /// Mixture component of each subject (always 0 for non-mixtures).
    pub component: Vec<usize>,
}

enum ErrorSampler {
    Mixture { cumulative: Vec<f64>, laws: Vec<Mvn2> },
    BivExp(BivExpParams),
}

impl ErrorSampler {
    fn new(model: &ErrorModel) -> Result<Self> {
        Ok(match model {
            ErrorModel::MixtureOfNormals(comps) => {
                let mut acc = 0.0;
                let cumulative = comps
                    .iter()
                    .map(|c| {
                        acc += c.proportion;
                        acc
                    })
                    .collect();
                let laws = comps
                    .iter()
                    .map(|c| Mvn2::new([c.theta.mu1, c.theta.mu2], c.theta.covariance()))
                    .collect::<Result<_>>()?;
                ErrorSampler::Mixture { cumulative, laws }
            }
            ErrorModel::BivariateExponential(p) => ErrorSampler::BivExp(*p),
        })
    }

    fn draw(&self, rng: &mut ChainRng) -> Result<(f64, f64, usize)> {
        match self {
            ErrorSampler::Mixture { cumulative, laws } => {
                let u = open01(rng) * cumulative[cumulative.len() - 1];
                let c = cumulative.iter().position(|&q| u < q).unwrap_or(cumulative.len() - 1);
                let [a, b] = laws[c].sample(rng);
                Ok((a, b, c))
            }
            ErrorSampler::BivExp(p) => {
                let (a, b) = sample_biv_exponential(p, rng)?;
                Ok((a, b, 0))
            }
        }
    }
}

/// Simulates `n` subjects: standard-normal instruments and confounders,
/// errors from the scenario, the two structural equations, then censoring.
pub fn generate_dataset(
    spec: &ScenarioSpec,
    n: usize,
    cens: &CensoringSpec,
    rng: &mut ChainRng,
) -> Result<(Dataset, SimTruth)> {
    spec.validate()?;
    cens.validate()?;
    if n == 0 {
        return Err(Error::Empty("simulated dataset"));
    }
    let reg = &spec.true_reg;
    let (p, q) = (reg.p(), reg.q());
    let errors = ErrorSampler::new(&spec.error_model)?;
    let mut obs = Vec::with_capacity(n);
    let mut truth = SimTruth {
        beta1: reg.beta1,
        y: Vec::with_capacity(n),
        xi1: Vec::with_capacity(n),
        xi2: Vec::with_capacity(n),
        component: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let g: Vec<f64> = (0..q).map(|_| sample_normal(rng, 0.0, 1.0)).collect();
        let z: Vec<f64> = (0..p).map(|_| sample_normal(rng, 0.0, 1.0)).collect();
        let (xi1, xi2, comp) = errors.draw(rng)?;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        let x = dot(&reg.alpha1, &g) + dot(&reg.alpha2, &z) + xi1;
        let y = reg.beta1 * x + dot(&reg.beta2, &z) + xi2;
        let outcome = apply_censoring(y, cens, rng);
        obs.push(Observation::new(outcome, x, z, g)?);
        truth.y.push(y);
        truth.xi1.push(xi1);
        truth.xi2.push(xi2);
        truth.component.push(comp);
    }
    Ok((Dataset::new(obs)?, truth))
}

/// Estimators compared in the replication study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Estimator {
    Dpmiv,
    Pbiv,
    Aft,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Dpmiv => "dpmiv",
            Estimator::Pbiv => "pbiv",
            Estimator::Aft => "aft",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dpmiv" => Ok(Estimator::Dpmiv),
            "pbiv" => Ok(Estimator::Pbiv),
            "aft" => Ok(Estimator::Aft),
            other => Err(Error::InvalidConfig(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Chain settings used for each replicate. `config.sampler.control.seed`
/// is ignored; seeds are derived from the master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSettings {
    pub config: DpmivConfig,
    pub n_chains: usize,
    pub init: InitMode,
    pub censoring: CensoringSpec,
}

impl Default for ReplicationSettings {
    fn default() -> Self {
        Self {
            config: DpmivConfig::default(),
            n_chains: 4,
            init: InitMode::SingleCluster,
            censoring: CensoringSpec::default(),
        }
    }
}

/// One estimator's output on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub replicate: usize,
    pub estimator: Estimator,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub mean_k: Option<f64>,
}

impl EstimateRecord {
    pub fn covers(&self, truth: f64) -> bool {
        self.lower <= truth && truth <= self.upper
    }
}

/// Seed of replicate `rep`'s dataset.
pub fn replicate_seed(master_seed: u64, rep: usize) -> u64 {
    derive_seed(master_seed, rep as u64)
}

/// Seed of chain `chain` fitted to replicate `rep`.
pub fn replicate_chain_seed(master_seed: u64, rep: usize, chain: usize) -> u64 {
    derive_seed(derive_seed(replicate_seed(master_seed, rep), u64::MAX), chain as u64)
}

/// Posterior mean, equal-tailed 95% interval and mean cluster count of
/// `β1` pooled over chains.
pub fn pooled_beta1(chains: &[ChainOutput]) -> Result<(f64, f64, f64, Option<f64>)> {
    let mut draws: Vec<f64> = chains.iter().flat_map(ChainOutput::beta1_trace).collect();
    if draws.is_empty() {
        return Err(Error::Empty("retained draws"));
    }
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    draws.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&draws, 0.025);
    let hi = quantile_sorted(&draws, 0.975);
    let ks: Vec<f64> =
        chains.iter().flat_map(|c| c.draws.iter().filter(|d| d.nu.is_some()).map(|d| d.k() as f64)).collect();
    let mean_k = (!ks.is_empty()).then(|| ks.iter().sum::<f64>() / ks.len() as f64);
    Ok((mean, lo, hi, mean_k))
}

/// Simulates replicate `rep` of `scenario` and returns the dataset.
pub fn replicate_dataset(
    spec: &ScenarioSpec,
    n: usize,
    cens: &CensoringSpec,
    rep: usize,
    master_seed: u64,
) -> Result<(Dataset, SimTruth)> {
    let mut rng = seeded_rng(replicate_seed(master_seed, rep));
    generate_dataset(spec, n, cens, &mut rng)
}

/// Fits one estimator to one replicate's dataset.
pub fn estimate(
    data: &Dataset,
    estimator: Estimator,
    settings: &ReplicationSettings,
    rep: usize,
    master_seed: u64,
) -> Result<EstimateRecord> {
    let run = |chain: usize| -> Result<ChainOutput> {
        let mut cfg = settings.config.clone();
        cfg.sampler.control.seed = replicate_chain_seed(master_seed, rep, chain);
        match estimator {
            Estimator::Dpmiv => DpmivChain::new(data, &cfg, settings.init)?.run(data),
            _ => PbivChain::new(data, &cfg.sampler, settings.init)?.run(data),
        }
    };
    match estimator {
        Estimator::Aft => {
            let fit = fit_aft(data)?;
            if !fit.converged {
                return Err(Error::InsufficientData(String::from("AFT fit did not converge")));
            }
            let (lower, upper) = fit.coef_x_interval(1.96);
            Ok(EstimateRecord { replicate: rep, estimator, estimate: fit.coef_x, lower, upper, mean_k: None })
        }
        _ => {
            if settings.n_chains == 0 {
                return Err(Error::InvalidConfig(String::from("need at least one chain")));
            }
            let chains = (0..settings.n_chains).map(run).collect::<Result<Vec<_>>>()?;
            let (estimate, lower, upper, mean_k) = pooled_beta1(&chains)?;
            Ok(EstimateRecord { replicate: rep, estimator, estimate, lower, upper, mean_k })
        }
    }
}

/// Bias, spread and coverage of one estimator over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: u32,
    pub n: usize,
    pub estimator: Estimator,
    /// Replicates that produced an estimate.
    pub reps: usize,
    /// Replicates whose fit failed and were excluded.
    pub failures: usize,
    pub bias: f64,
    pub sd: f64,
    pub cp: f64,
    pub mean_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub const HEADER: [&'static str; 9] =
        ["scenario", "n", "estimator", "reps", "failures", "bias", "sd", "cp", "mean_k"];

    pub fn row(&self, scenario: u32, n: usize, estimator: Estimator) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.n == n && r.estimator == estimator)
    }
}

/// Aggregates per-replicate records of one estimator. Records are sorted by
/// replicate first so the result does not depend on completion order.
pub fn aggregate(
    scenario: u32,
    n: usize,
    estimator: Estimator,
    truth: f64,
    records: &[EstimateRecord],
    failures: usize,
) -> Result<MetricsRow> {
    let mut recs: Vec<&EstimateRecord> = records.iter().filter(|r| r.estimator == estimator).collect();
    if recs.is_empty() {
        return Err(Error::InsufficientData(format!("no successful {} replicates", estimator.name())));
    }
    recs.sort_by_key(|r| r.replicate);
    let m = recs.len() as f64;
    let mean = recs.iter().map(|r| r.estimate).sum::<f64>() / m;
    let sd = if recs.len() > 1 {
        sqrt(recs.iter().map(|r| (r.estimate - mean) * (r.estimate - mean)).sum::<f64>() / (m - 1.0))
    } else {
        0.0
    };
    let cp = recs.iter().filter(|r| r.covers(truth)).count() as f64 / m;
    let ks: Vec<f64> = recs.iter().filter_map(|r| r.mean_k).collect();
    let mean_k = (!ks.is_empty()).then(|| ks.iter().sum::<f64>() / ks.len() as f64);
    Ok(MetricsRow { scenario, n, estimator, reps: recs.len(), failures, bias: mean - truth, sd, cp, mean_k })
}

/// Runs `reps` replicates of `scenario` at sample size `n` sequentially and
/// scores each estimator. Failed fits are excluded and counted.
pub fn run_replications(
    scenario: u32,
    n: usize,
    reps: usize,
    estimators: &[Estimator],
    settings: &ReplicationSettings,
    master_seed: u64,
) -> Result<MetricsTable> {
    if reps < 2 {
        return Err(Error::InvalidConfig(String::from("need at least 2 replicates")));
    }
    let spec = builtin_scenario(scenario)?;
    let mut records = Vec::new();
    let mut failures = vec![0usize; estimators.len()];
    for rep in 0..reps {
        let (data, _) = replicate_dataset(&spec, n, &settings.censoring, rep, master_seed)?;
        for (e, &est) in estimators.iter().enumerate() {
            match estimate(&data, est, settings, rep, master_seed) {
                Ok(r) => records.push(r),
                Err(_) => failures[e] += 1,
            }
        }
    }
    let rows = estimators
        .iter()
        .zip(&failures)
        .map(|(&est, &f)| aggregate(scenario, n, est, spec.true_reg.beta1, &records, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::ChainControl;

    #[test]
    fn builtin_parameters() {
        let s1 = builtin_scenario(1).unwrap();
        let ErrorModel::MixtureOfNormals(c) = &s1.error_model else { panic!() };
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].theta, ClusterParams { mu1: 0.5, mu2: 0.5, sigma1_sq: 0.5, sigma2_sq: 1.0, rho: 0.424 });
        let ErrorModel::MixtureOfNormals(c) = builtin_scenario(4).unwrap().error_model else { panic!() };
        assert_eq!((c[0].theta.sigma1_sq, c[1].theta.sigma1_sq), (0.7, 0.05));
        assert_eq!((c[0].theta.rho, c[1].theta.rho), (0.357, 0.6));
        assert!(c.iter().all(|k| k.theta.mu1 == 0.0 && k.theta.mu2 == 0.0));
        let ErrorModel::MixtureOfNormals(c) = builtin_scenario(5).unwrap().error_model else { panic!() };
        let props: Vec<f64> = c.iter().map(|k| k.proportion).collect();
        assert_eq!(props, vec![0.72, 0.18, 0.05, 0.03, 0.02]);
        for id in 1..=6 {
            let s = builtin_scenario(id).unwrap();
            s.validate().unwrap();
            assert_eq!(s.true_reg, truth_reg());
        }
        assert_eq!(builtin_scenario(7), Err(Error::UnknownScenario(7)));
        assert_eq!(builtin_scenario(0), Err(Error::UnknownScenario(0)));
    }

    #[test]
    fn censoring_edge_cases() {
        let mut rng = seeded_rng(1);
        let always = CensoringSpec { exact_fraction: 1.0, ..Default::default() };
        for _ in 0..1000 {
            assert_eq!(apply_censoring(0.3, &always, &mut rng), Outcome::Exact(0.3));
        }
        let never = CensoringSpec { exact_fraction: 0.0, ..Default::default() };
        for _ in 0..1000 {
            assert!(matches!(apply_censoring(-1e6, &never, &mut rng), Outcome::Left(_)));
            let o = apply_censoring(0.1, &never, &mut rng);
            o.validate().unwrap();
        }
    }

    #[test]
    fn noiseless_limit_is_deterministic() {
        let spec = ScenarioSpec { error_model: mixture(&[(1.0, 0.0, 1e-12, 0.0, 1e-12, 0.0)]), true_reg: truth_reg() };
        let (data, truth) = generate_dataset(&spec, 500, &CensoringSpec::default(), &mut seeded_rng(4)).unwrap();
        for (o, y) in data.observations().iter().zip(&truth.y) {
            let fitted = -o.x + 0.8 * (o.z[0] + o.z[1]);
            assert!((y - fitted).abs() < 1e-4);
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = builtin_scenario(5).unwrap();
        let a = generate_dataset(&spec, 200, &CensoringSpec::default(), &mut seeded_rng(9)).unwrap();
        let b = generate_dataset(&spec, 200, &CensoringSpec::default(), &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixture_frequencies_match_proportions() {
        let spec = builtin_scenario(5).unwrap();
        let n = 100_000;
        let (_, truth) = generate_dataset(&spec, n, &CensoringSpec::default(), &mut seeded_rng(2)).unwrap();
        let ErrorModel::MixtureOfNormals(comps) = &spec.error_model else { panic!() };
        for (c, comp) in comps.iter().enumerate() {
            let freq = truth.component.iter().filter(|&&k| k == c).count() as f64 / n as f64;
            let se = sqrt(comp.proportion * (1.0 - comp.proportion) / n as f64);
            assert!((freq - comp.proportion).abs() < 3.0 * se, "component {c}: {freq}");
        }
    }

    #[test]
    fn aggregate_matches_hand_computation() {
        let rec = |replicate, estimate, lower, upper| EstimateRecord {
            replicate,
            estimator: Estimator::Aft,
            estimate,
            lower,
            upper,
            mean_k: None,
        };
        // estimates -0.9, -1.2, -0.6: mean -0.9, bias 0.1, sd 0.3; two of
        // three intervals contain -1
        let records = [rec(2, -0.6, -0.8, -0.4), rec(0, -0.9, -1.1, -0.7), rec(1, -1.2, -1.5, -0.9)];
        let row = aggregate(1, 10, Estimator::Aft, -1.0, &records, 1).unwrap();
        assert!((row.bias - 0.1).abs() < 1e-12);
        assert!((row.sd - 0.3).abs() < 1e-12);
        assert!((row.cp - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!((row.reps, row.failures, row.mean_k), (3, 1, None));
    }

    #[test]
    fn prior_only_chains_cover_trivially() {
        let mut settings = ReplicationSettings::default();
        settings.config.sampler.prior_only = true;
        settings.config.sampler.proposal_width_beta1 = 20.0;
        settings.config.sampler.control = ChainControl { n_iter: 400, burn_in: 100, thinning: 1, seed: 0 };
        settings.n_chains = 1;
        let table = run_replications(1, 20, 2, &[Estimator::Pbiv], &settings, 5).unwrap();
        assert_eq!(table.rows[0].cp, 1.0);
        assert_eq!(table.rows[0].reps, 2);
        assert!(run_replications(1, 20, 1, &[Estimator::Pbiv], &settings, 5).is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in [Estimator::Dpmiv, Estimator::Pbiv, Estimator::Aft] {
            assert_eq!(Estimator::parse(e.name()).unwrap(), e);
        }
        assert!(Estimator::parse("ols").is_err());
    }
}
