//! End-to-end acceptance checks, one line per criterion.
//!
//! Every check runs at full scale and prints `PASS` or `FAIL` with the
//! measured values. The process exits non-zero only when a check cannot be
//! evaluated at all, or when `DPMIV_ACCEPTANCE_STRICT` is set and some
//! check failed. Set `DPMIV_ACCEPTANCE_ONLY=1,4,9` to run a subset.

use dpmiv_cli::commands::{self, BenchArgs};
use dpmiv_cli::config::{KeyValues, ModelKind, RunConfig};
use dpmiv_cli::output::read_summary;
use dpmiv_core::diagnostics::{effective_sample_size, ks_one_sample};
use dpmiv_core::dpmiv::{run_chain, ChainControl, DpmState, DpmivChain, DpmivConfig, InitMode, WidthAdaptation};
use dpmiv_core::model::{
    obs_loglik, sample_theta_h0, ClusterParams, Dataset, H0Spec, Observation, Outcome, RegressionParams,
};
use dpmiv_core::pbiv::run_pbiv_chain;
use dpmiv_core::sim::{builtin_scenario, generate_dataset, CensoringSpec, Estimator, MetricsRow, MetricsTable};
use dpmiv_core::stats::{
    antoniak_log_pmf_all, sample_biv_exponential, sample_mvn2, sample_normal, sample_uniform, seeded_rng,
    std_normal_cdf, BivExpParams, ChainRng,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use std::time::Instant;

type Check = Result<(bool, String), String>;

/// Chain settings shared by the replication criteria: four chains of 20k
/// iterations, 5k burn-in, thinning 10, widths tuned during burn-in.
const CHAIN_KEYS: &str = "chains = 4\niterations = 20000\nburn_in = 5000\nthinning = 10\nadapt = true\ninit = single";
const MASTER_SEED: u64 = 20240101;
const REPS: usize = 20;

fn bench(scenario: u32, estimators: &str) -> Result<MetricsTable, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let text = format!(
        "{CHAIN_KEYS}\nscenarios = {scenario}\nn = 300\nreps = {REPS}\nestimators = {estimators}\nseed = {MASTER_SEED}\nout = {}",
        dir.path().join("metrics.csv").display()
    );
    let args = BenchArgs::from_keys(&KeyValues::parse(&text).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let report = commands::bench(&args).map_err(|e| e.to_string())?;
    Ok(report.table)
}

fn row(table: &MetricsTable, scenario: u32, est: Estimator) -> Result<MetricsRow, String> {
    table.row(scenario, 300, est).cloned().ok_or_else(|| format!("no {} row", est.name()))
}

fn describe(r: &MetricsRow) -> String {
    format!("bias {:+.3} sd {:.3} cp {:.2} over {} reps ({} failed)", r.bias, r.sd, r.cp, r.reps, r.failures)
}

fn criterion_1_and_2() -> (Check, Check) {
    let start = Instant::now();
    let table = match bench(1, "dpmiv,aft") {
        Ok(t) => t,
        Err(e) => return (Err(e.clone()), Err(e)),
    };
    let secs = start.elapsed().as_secs_f64();
    let c1 = row(&table, 1, Estimator::Dpmiv).map(|r| {
        let ok = r.reps >= REPS && r.bias.abs() <= 0.06 && r.cp >= 0.85 && (0.08..=0.20).contains(&r.sd);
        (ok, format!("DPMIV scenario 1: {}; {:.0} s for both estimators", describe(&r), secs))
    });
    let c2 = row(&table, 1, Estimator::Aft).map(|r| {
        let ok = r.reps >= REPS && (0.45..=0.67).contains(&r.bias) && r.cp <= 0.10;
        (ok, format!("naive AFT scenario 1: {}", describe(&r)))
    });
    (c1, c2)
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let table = bench(6, "pbiv,dpmiv")?;
    let p = row(&table, 6, Estimator::Pbiv)?;
    let d = row(&table, 6, Estimator::Dpmiv)?;
    let ok = p.reps >= REPS && d.reps >= REPS && p.bias >= 0.30 && p.cp <= 0.30 && d.bias.abs() <= 0.15 && d.cp >= 0.75;
    Ok((
        ok,
        format!(
            "scenario 6: PBIV {}; DPMIV {}, mean k {:.2}; {:.0} s",
            describe(&p),
            describe(&d),
            d.mean_k.unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn criterion_4() -> Check {
    let spec = builtin_scenario(1).map_err(|e| e.to_string())?;
    let (data, _) = generate_dataset(&spec, 100_000, &CensoringSpec::default(), &mut seeded_rng(MASTER_SEED))
        .map_err(|e| e.to_string())?;
    let counts = data.count_by_code();
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / data.len() as f64).collect();
    let target = [0.20, 0.20, 0.35, 0.25];
    let ok = freq.iter().zip(target).all(|(f, t)| (f - t).abs() <= 0.03);
    Ok((
        ok,
        format!(
            "left/interval/right/exact = {:.1}%/{:.1}%/{:.1}%/{:.1}% (target 20/20/35/25 within 3 points)",
            100.0 * freq[0],
            100.0 * freq[1],
            100.0 * freq[2],
            100.0 * freq[3]
        ),
    ))
}

fn bvn_density(e1: f64, e2: f64, t: &ClusterParams) -> f64 {
    let (s1, s2) = (t.sigma1_sq.sqrt(), t.sigma2_sq.sqrt());
    let (u, v) = ((e1 - t.mu1) / s1, (e2 - t.mu2) / s2);
    let one_m = 1.0 - t.rho * t.rho;
    (-(u * u - 2.0 * t.rho * u * v + v * v) / (2.0 * one_m)).exp()
        / (2.0 * std::f64::consts::PI * s1 * s2 * one_m.sqrt())
}

/// Adaptive Simpson quadrature with a relative tolerance.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let rough = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // A coarse pass fixes the scale of the absolute tolerance.
    let coarse = step(f, a, b, fa, fm, fb, rough, rough.abs().max(1e-300) * 1e-4, 40);
    step(f, a, b, fa, fm, fb, rough, coarse.abs() * rel_tol, 50)
}

#[derive(Debug, Clone)]
struct Tuple {
    code: u8,
    x: f64,
    z: Vec<f64>,
    g: Vec<f64>,
    reg: RegressionParams,
    theta: ClusterParams,
    offset: f64,
    width: f64,
}

fn tuple_strategy() -> impl Strategy<Value = Tuple> {
    let coef = || -1.5..1.5f64;
    (
        1u8..=4,
        -2.0..2.0f64,
        proptest::collection::vec(-2.0..2.0f64, 2),
        proptest::collection::vec(-2.0..2.0f64, 2),
        (
            proptest::collection::vec(coef(), 2),
            proptest::collection::vec(coef(), 2),
            coef(),
            proptest::collection::vec(coef(), 2),
        ),
        (-1.0..1.0f64, -1.0..1.0f64, 0.2..3.0f64, 0.2..3.0f64, -0.9..0.9f64),
        (-3.0..3.0f64, 0.05..3.0f64),
    )
        .prop_map(|(code, x, z, g, (alpha1, alpha2, beta1, beta2), (mu1, mu2, s1, s2, rho), (offset, width))| {
            Tuple {
                code,
                x,
                z,
                g,
                reg: RegressionParams { alpha1, alpha2, beta1, beta2 },
                theta: ClusterParams { mu1, mu2, sigma1_sq: s1, sigma2_sq: s2, rho },
                offset,
                width,
            }
        })
}

/// Compares the censored likelihood with direct integration of the joint
/// bivariate-normal density over the second-stage error.
fn check_tuple(t: &Tuple) -> Result<f64, String> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let e1 = t.x - dot(&t.reg.alpha1, &t.g) - dot(&t.reg.alpha2, &t.z);
    let pred = t.reg.beta1 * t.x + dot(&t.reg.beta2, &t.z);
    let th = &t.theta;
    // Bounds placed around the conditional law of the second-stage error.
    let m = th.mu2 + th.rho * (th.sigma2_sq / th.sigma1_sq).sqrt() * (e1 - th.mu1);
    let s = (th.sigma2_sq * (1.0 - th.rho * th.rho)).sqrt();
    let lo = m + t.offset * s;
    let hi = lo + t.width * s;
    let (outcome, a, b) = match t.code {
        1 => (Outcome::Left(pred + lo), m - 40.0 * s, lo),
        2 => (Outcome::Interval(pred + lo, pred + hi), lo, hi),
        3 => (Outcome::Right(pred + lo), lo, m + 40.0 * s),
        _ => (Outcome::Exact(pred + lo), lo, lo),
    };
    let obs = Observation::new(outcome, t.x, t.z.clone(), t.g.clone()).map_err(|e| e.to_string())?;
    let got = obs_loglik(&obs, &t.reg, th).map_err(|e| e.to_string())?.exp();
    let want = if t.code == 4 { bvn_density(e1, lo, th) } else { simpson(&|e2| bvn_density(e1, e2, th), a, b, 1e-10) };
    Ok(((got - want) / want).abs())
}

fn criterion_5() -> Check {
    let mut runner = TestRunner::new_with_rng(
        PropConfig { cases: 200, failure_persistence: None, ..PropConfig::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let worst = std::cell::Cell::new(0.0f64);
    let codes = std::cell::RefCell::new([0usize; 4]);
    let result = runner.run(&tuple_strategy(), |t| {
        codes.borrow_mut()[usize::from(t.code) - 1] += 1;
        let rel = check_tuple(&t).map_err(TestCaseError::fail)?;
        worst.set(worst.get().max(rel));
        prop_assert!(rel <= 1e-6, "relative error {rel} for {t:?}");
        Ok(())
    });
    let codes = *codes.borrow();
    let covered = codes.iter().all(|&c| c > 0);
    let msg = format!("max relative error {:.2e}, cases per code {:?}", worst.get(), codes);
    match result {
        Ok(()) => Ok((covered, msg)),
        Err(e) => Ok((false, format!("{msg}; {e}"))),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

const NU_LO: f64 = 0.1;
const NU_HI: f64 = 4.8;

fn scenario1(n: usize, seed: u64) -> Result<Dataset, String> {
    let spec = builtin_scenario(1).map_err(|e| e.to_string())?;
    generate_dataset(&spec, n, &CensoringSpec::default(), &mut seeded_rng(seed)).map(|d| d.0).map_err(|e| e.to_string())
}

/// Prior-only chain under the default priors: β1 against N(0, 100), the
/// correlation of observation 0's component against U(-1, 1) and ν
/// against its prior.
fn prior_recovery() -> Result<(bool, String), String> {
    let data = scenario1(10, 1)?;
    let mut config = DpmivConfig::default();
    config.sampler.prior_only = true;
    config.sampler.proposal_width_beta1 = 35.0;
    config.sampler.proposal_width_other = 35.0;
    config.nu_proposal_width = 3.0;
    config.sampler.control.seed = 11;
    let mut chain = DpmivChain::new(&data, &config, InitMode::SingleCluster).map_err(|e| e.to_string())?;
    let (mut beta1, mut rho, mut nu) = (Vec::new(), Vec::new(), Vec::new());
    for it in 0..100_000 {
        chain.sweep(&data).map_err(|e| e.to_string())?;
        if it >= 1_000 && it % 25 == 0 {
            let s = chain.state();
            beta1.push(s.reg.beta1);
            rho.push(s.clusters[s.assignment[0]].rho);
            nu.push(s.nu);
        }
    }
    let p_beta = ks_one_sample(&beta1, |b| std_normal_cdf(b / 10.0)).map_err(|e| e.to_string())?.1;
    let p_rho = ks_one_sample(&rho, |r| ((r + 1.0) / 2.0).clamp(0.0, 1.0)).map_err(|e| e.to_string())?.1;
    let p_nu = ks_one_sample(&nu, |v| {
        let r = ((NU_HI - v) / (NU_HI - NU_LO)).clamp(0.0, 1.0);
        1.0 - r * r
    })
    .map_err(|e| e.to_string())?
    .1;
    let ok = p_beta > 0.01 && p_rho > 0.01 && p_nu > 0.01;
    Ok((ok, format!("prior KS p: beta1 {p_beta:.3}, rho {p_rho:.3}, nu {p_nu:.3}")))
}

fn vanishing_concentration() -> Result<(bool, String), String> {
    let data = scenario1(300, 2)?;
    let mut config = DpmivConfig { nu_lo: 0.0, nu_hi: 1e-300, ..DpmivConfig::default() };
    config.sampler.control = ChainControl { n_iter: 20_000, burn_in: 5_000, thinning: 10, seed: 5 };
    config.sampler.adaptation = Some(WidthAdaptation::default());
    let mix = run_chain(&data, &config, InitMode::SingleCluster).map_err(|e| e.to_string())?;
    let par = run_pbiv_chain(&data, &config.sampler, InitMode::SingleCluster).map_err(|e| e.to_string())?;
    let (a, b) = (mean(&mix.beta1_trace()), mean(&par.beta1_trace()));
    let ok = (a - b).abs() <= 0.05 && mix.draws.iter().all(|d| d.k() == 1);
    Ok((ok, format!("beta1 mean DPMIV {a:.4} vs PBIV {b:.4}")))
}

fn regenerate(data: &Dataset, state: &DpmState, rng: &mut ChainRng) -> Result<Dataset, String> {
    let obs = data
        .observations()
        .iter()
        .zip(&state.assignment)
        .map(|(o, &c)| {
            let t = state.clusters[c];
            let [e1, e2] = sample_mvn2([t.mu1, t.mu2], t.covariance(), rng).map_err(|e| e.to_string())?;
            let r = &state.reg;
            let x = r.alpha1[0] * o.g[0] + r.alpha2[0] * o.z[0] + e1;
            let y = r.beta1 * x + r.beta2[0] * o.z[0] + e2;
            Observation::new(Outcome::Exact(y), x, o.z.clone(), o.g.clone()).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, String>>()?;
    Dataset::new(obs).map_err(|e| e.to_string())
}

/// Successive-conditional simulation on ten observations: test-function
/// averages must match their prior expectations within 4 standard errors.
fn joint_distribution() -> Result<(bool, String), String> {
    let n = 10;
    let h0 = H0Spec { mu1_mean: 0.5, mu1_var: 2.0, mu2_mean: -0.3, mu2_var: 1.5, var_shape: 3.0, var_scale: 2.0 };
    let mut rng = seeded_rng(77);
    let obs = (0..n)
        .map(|_| {
            let z = sample_normal(&mut rng, 0.0, 1.0);
            let g = sample_normal(&mut rng, 0.0, 1.0);
            Observation::new(Outcome::Exact(0.0), 0.0, vec![z], vec![g]).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, String>>()?;
    let mut data = Dataset::new(obs).map_err(|e| e.to_string())?;
    let mut config = DpmivConfig::default();
    config.sampler.h0 = h0;
    config.sampler.reg_prior.default_var = 1.0;
    config.sampler.proposal_width_beta1 = 1.0;
    config.sampler.proposal_width_other = 1.5;
    config.sampler.control.seed = 123;
    config.nu_proposal_width = 2.0;
    let mut draw = || sample_normal(&mut rng, 0.0, 1.0);
    let reg = RegressionParams { alpha1: vec![draw()], alpha2: vec![draw()], beta1: draw(), beta2: vec![draw()] };
    let theta = sample_theta_h0(&h0, &mut rng);
    let state = DpmState { reg, assignment: vec![0; n], clusters: vec![theta], nu: 1.0 };
    data = regenerate(&data, &state, &mut rng)?;
    let mut chain = DpmivChain::from_state(&data, &config, state).map_err(|e| e.to_string())?;

    let mut mean_k = 0.0;
    let mut w_total = 0.0;
    for s in 0..20_000 {
        let nu = NU_LO + (s as f64 + 0.5) * (NU_HI - NU_LO) / 20_000.0;
        let w = NU_HI - nu;
        mean_k += w * (0..n).map(|i| nu / (nu + i as f64)).sum::<f64>();
        w_total += w;
    }
    mean_k /= w_total;
    let l = NU_HI - NU_LO;
    let names = ["beta1", "beta1^2", "alpha2", "mu2", "rho", "nu", "k"];
    let expected = [0.0, 1.0, 0.0, h0.mu2_mean, 0.0, NU_LO + l / 3.0, mean_k];
    let mut traces = vec![Vec::new(); names.len()];
    for _ in 0..150_000 {
        chain.sweep(&data).map_err(|e| e.to_string())?;
        data = regenerate(&data, chain.state(), &mut rng)?;
        let s = chain.state();
        let t = s.clusters[s.assignment[0]];
        let values = [s.reg.beta1, s.reg.beta1 * s.reg.beta1, s.reg.alpha2[0], t.mu2, t.rho, s.nu, s.k() as f64];
        for (tr, v) in traces.iter_mut().zip(values) {
            tr.push(v);
        }
    }
    let zs: Vec<f64> = traces
        .iter()
        .zip(expected)
        .map(|(tr, want)| (mean(tr) - want) / (var(tr) / effective_sample_size(tr)).sqrt())
        .collect();
    let worst = zs.iter().zip(names).max_by(|a, b| a.0.abs().total_cmp(&b.0.abs())).ok_or("no statistics")?;
    Ok((zs.iter().all(|z| z.abs() <= 4.0), format!("largest |z| {:.2} ({})", worst.0.abs(), worst.1)))
}

fn criterion_6() -> Check {
    let (a, b, c) = (prior_recovery()?, vanishing_concentration()?, joint_distribution()?);
    Ok((a.0 && b.0 && c.0, format!("(a) {}; (b) {}; (c) {}", a.1, b.1, c.1)))
}

fn criterion_7() -> Check {
    let mut worst_norm = 0.0f64;
    for n in 1..=200 {
        for nu in [0.01, 0.1, 0.7, 1.0, 2.5, 4.8, 10.0, 50.0] {
            let pmf = antoniak_log_pmf_all(nu, n).map_err(|e| e.to_string())?;
            let total: f64 = pmf.iter().map(|l| l.exp()).sum();
            worst_norm = worst_norm.max((total - 1.0).abs());
        }
    }
    let (n, nu, runs) = (8usize, 0.7, 1_000_000usize);
    let mut rng = seeded_rng(MASTER_SEED);
    let mut counts = vec![0usize; n + 1];
    for _ in 0..runs {
        // Customer i opens a new table with probability ν / (ν + i).
        let k = (0..n).filter(|&i| sample_uniform(&mut rng) < nu / (nu + i as f64)).count();
        counts[k] += 1;
    }
    let pmf = antoniak_log_pmf_all(nu, n).map_err(|e| e.to_string())?;
    let mut worst_z = 0.0f64;
    for k in 1..=n {
        let p = pmf[k - 1].exp();
        let se = (p * (1.0 - p) / runs as f64).sqrt();
        if se > 0.0 {
            worst_z = worst_z.max((counts[k] as f64 / runs as f64 - p).abs() / se);
        }
    }
    let ok = worst_norm <= 1e-10 && worst_z <= 3.0 && counts[0] == 0;
    Ok((ok, format!("normalization error {worst_norm:.1e}; CRP Monte Carlo worst cell {worst_z:.2} SE")))
}

fn criterion_8() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("scenario1.csv");
    commands::simulate(&commands::SimulateArgs {
        scenario: 1,
        n: 300,
        seed: MASTER_SEED,
        out: data.clone(),
        time_scale: false,
        censoring: CensoringSpec::default(),
    })
    .map_err(|e| e.to_string())?;
    let keys = CHAIN_KEYS.replace("chains = 4", "chains = 6");
    let fit = |out: &str| -> Result<serde_json::Value, String> {
        let text = format!("{keys}\nseed = 7\ndata = {}\nout_dir = {}", data.display(), dir.path().join(out).display());
        let cfg = RunConfig::from_keys(ModelKind::Dpmiv, &KeyValues::parse(&text).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        commands::fit(&cfg).map_err(|e| e.to_string())?;
        let path = cfg.out_dir.join("summary.json");
        read_summary(&path).map_err(|e| e.to_string())?;
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        v.as_object_mut().ok_or("summary is not an object")?.remove("timing");
        Ok(v)
    };
    let (a, b) = (fit("a")?, fit("b")?);
    let identical = serde_json::to_string(&a).ok() == serde_json::to_string(&b).ok();
    let psrf = a["parameters"]
        .as_array()
        .and_then(|ps| ps.iter().find(|p| p["name"] == "beta1"))
        .and_then(|p| p["psrf"].as_f64())
        .ok_or("no beta1 PSRF")?;
    Ok((identical && psrf <= 1.1, format!("summaries identical: {identical}; 6-chain PSRF(beta1) {psrf:.4}")))
}

fn criterion_9() -> Check {
    let params = BivExpParams::new(0.3, 0.3, 0.3).map_err(|e| e.to_string())?;
    let mut rng = seeded_rng(MASTER_SEED);
    let draws = 1_000_000;
    let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        let (a, b) = sample_biv_exponential(&params, &mut rng).map_err(|e| e.to_string())?;
        s1 += a;
        s2 += b;
        s11 += a * a;
        s22 += b * b;
        s12 += a * b;
    }
    let n = draws as f64;
    let (m1, m2) = (s1 / n, s2 / n);
    let corr = (s12 / n - m1 * m2) / ((s11 / n - m1 * m1) * (s22 / n - m2 * m2)).sqrt();
    let ok = (m1 / 0.3 - 1.0).abs() <= 0.01 && (m2 / 0.3 - 1.0).abs() <= 0.01 && (corr - 0.3).abs() <= 0.02;
    Ok((ok, format!("means {m1:.4}, {m2:.4}; correlation {corr:.4}")))
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("DPMIV_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |c: u32| only.as_ref().is_none_or(|o| o.contains(&c));
    let mut results: Vec<(u32, Check)> = Vec::new();
    if wanted(1) || wanted(2) {
        let (c1, c2) = criterion_1_and_2();
        results.push((1, c1));
        results.push((2, c2));
    }
    let singles: [(u32, fn() -> Check); 7] = [
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    for (c, f) in singles {
        if wanted(c) {
            let start = Instant::now();
            let r = f();
            eprintln!("criterion {c} evaluated in {:.1} s", start.elapsed().as_secs_f64());
            results.push((c, r));
        }
    }
    results.sort_by_key(|r| r.0);
    let (mut failed, mut broken) = (0, 0);
    for (c, r) in &results {
        if only.as_ref().is_some_and(|o| !o.contains(c)) {
            continue;
        }
        match r {
            Ok((true, msg)) => println!("criterion {c}: PASS  {msg}"),
            Ok((false, msg)) => {
                failed += 1;
                println!("criterion {c}: FAIL  {msg}");
            }
            Err(e) => {
                broken += 1;
                println!("criterion {c}: ERROR {e}");
            }
        }
    }
    println!("acceptance: {} checked, {failed} failed, {broken} could not run", results.len());
    let strict = std::env::var_os("DPMIV_ACCEPTANCE_STRICT").is_some();
    if broken > 0 || (strict && failed > 0) {
        std::process::exit(1);
    }
}
