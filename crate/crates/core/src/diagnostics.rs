//! Convergence diagnostics and posterior summaries.

use crate::math::{exp, ln, sqrt, LN_2PI};
use crate::mcmc::ChainOutput;
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Split-chain potential scale reduction factor.
///
/// Each chain is cut into two halves (dropping the middle draw of odd
/// lengths) and the between- and within-segment variances are compared.
/// Values below one are reported as one; identical constant chains give
/// one and distinct constant chains give `+∞`.
pub fn psrf(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InsufficientData(String::from("split-chain PSRF needs at least 2 chains")));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::UnequalChains);
    }
    if len < 4 {
        return Err(Error::InsufficientData(format!("chains need at least 4 draws, got {len}")));
    }
    let half = len / 2;
    let segments: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[len - half..]]).collect();
    let m = segments.len() as f64;
    let l = half as f64;
    let means: Vec<f64> = segments.iter().map(|s| mean(s)).collect();
    let grand = mean(&means);
    let b = l / (m - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    let w = segments.iter().map(|s| sample_var(s)).sum::<f64>() / m;
    if w <= 0.0 {
        return Ok(if b <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (l - 1.0) / l * w + b / l;
    Ok(sqrt(var_plus / w).max(1.0))
}

/// Type-7 (linear interpolation) quantile of ascending `sorted`.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = crate::math::floor(h) as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Effective sample size of one chain from its autocorrelations, truncated
/// at the first non-positive sum of an adjacent pair (Geyer's initial
/// positive sequence).
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(chain);
    let c0 = chain.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| {
        chain[..n - lag].iter().zip(&chain[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64 / c0
    };
    let mut tau = 1.0;
    let mut lag = 1;
    while lag + 1 < n / 2 {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau).min(n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Quantiles at 2.5, 25, 50, 75 and 97.5 percent.
    pub quantiles: [f64; 5],
    pub psrf: Option<f64>,
    pub ess: f64,
    pub n_draws: usize,
}

pub const SUMMARY_PROBS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Pooled summary of one parameter over chains. The split-chain PSRF is
/// reported when there are at least two equal-length chains of four or more
/// draws.
pub fn summarize(name: &str, chains: &[Vec<f64>]) -> Result<ParamSummary> {
    let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    if pooled.is_empty() {
        return Err(Error::Empty("retained draws"));
    }
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("posterior draws"));
    }
    pooled.sort_by(f64::total_cmp);
    let quantiles = SUMMARY_PROBS.map(|p| quantile_sorted(&pooled, p));
    let slices: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    let psrf = psrf(&slices).ok();
    Ok(ParamSummary {
        name: String::from(name),
        mean: mean(&pooled),
        sd: sqrt(sample_var(&pooled)),
        quantiles,
        psrf,
        ess: chains.iter().map(|c| effective_sample_size(c)).sum(),
        n_draws: pooled.len(),
    })
}

/// Summaries of every scalar trace the chains share.
pub fn summarize_chains(chains: &[ChainOutput]) -> Result<Vec<ParamSummary>> {
    let first = chains.first().ok_or(Error::Empty("chains"))?;
    let names = first.parameter_names();
    let mut out = Vec::new();
    for name in names {
        let traces: Option<Vec<Vec<f64>>> = chains.iter().map(|c| c.trace(&name)).collect();
        if let Some(traces) = traces {
            out.push(summarize(&name, &traces)?);
        }
    }
    Ok(out)
}

/// Rectangular evaluation grid for the error density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }
}

/// Log density of the error pair on a grid. `log_density[j * nx + i]` is
/// the value at `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub log_density: Vec<f64>,
}

impl DensityGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.log_density[j * self.xs.len() + i]
    }
}

fn log_bvn_pdf(x: f64, y: f64, t: &crate::model::ClusterParams) -> f64 {
    let [[s11, s12], [_, s22]] = t.covariance();
    let det = s11 * s22 - s12 * s12;
    let (dx, dy) = (x - t.mu1, y - t.mu2);
    let q = (s22 * dx * dx - 2.0 * s12 * dx * dy + s11 * dy * dy) / det;
    -0.5 * q - LN_2PI - 0.5 * ln(det)
}

/// Posterior mean density of `(ξ1, ξ2)`: each retained draw contributes the
/// finite mixture weighted by cluster occupancy, and draws are averaged
/// pointwise before taking logs.
pub fn error_density_grid(chains: &[ChainOutput], grid: &GridSpec) -> Result<DensityGrid> {
    if grid.nx < 2 || grid.ny < 2 || !(grid.x_min < grid.x_max) || !(grid.y_min < grid.y_max) {
        return Err(Error::InvalidConfig(String::from("grid needs at least 2 points per axis and increasing ranges")));
    }
    let draws: Vec<_> = chains.iter().flat_map(|c| &c.draws).collect();
    if draws.is_empty() {
        return Err(Error::Empty("retained draws"));
    }
    let xs = GridSpec::axis(grid.x_min, grid.x_max, grid.nx);
    let ys = GridSpec::axis(grid.y_min, grid.y_max, grid.ny);
    let comps: Vec<(f64, crate::model::ClusterParams)> = draws
        .iter()
        .flat_map(|d| {
            let n: usize = d.sizes.iter().sum();
            d.sizes.iter().zip(&d.clusters).map(move |(&s, &t)| (ln(s as f64 / n as f64), t))
        })
        .collect();
    let ln_draws = ln(draws.len() as f64);
    let mut log_density = Vec::with_capacity(grid.nx * grid.ny);
    let mut terms = vec![0.0; comps.len()];
    for &y in &ys {
        for &x in &xs {
            for (term, (lw, t)) in terms.iter_mut().zip(&comps) {
                *term = lw + log_bvn_pdf(x, y, t);
            }
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let v =
                if max == f64::NEG_INFINITY { max } else { max + ln(terms.iter().map(|t| exp(t - max)).sum::<f64>()) };
            log_density.push(v - ln_draws);
        }
    }
    Ok(DensityGrid { xs, ys, log_density })
}

/// Kolmogorov limiting tail probability `P(K > lambda)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = exp(-2.0 * j * j * lambda * lambda);
        sum += if j as u32 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, ne: f64) -> f64 {
    let rt = sqrt(ne);
    kolmogorov_q((rt + 0.12 + 0.11 / rt) * d)
}

/// One-sample Kolmogorov–Smirnov statistic and asymptotic p-value against
/// the continuous CDF `cdf`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok((d, ks_p_value(d, n)))
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok((d, ks_p_value(d, na * nb / (na + nb))))
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
    }
    let choose2 = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let rows: f64 = (0..ka).map(|i| choose2(table[i * kb..(i + 1) * kb].iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| choose2((0..ka).map(|i| table[i * kb + j]).sum())).sum();
    let total = choose2(a.len() as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::{AcceptanceRates, Draw};
    use crate::model::{ClusterParams, RegressionParams};
    use crate::stats::{sample_normal, seeded_rng, std_normal_cdf};

    #[test]
    fn psrf_degenerate_and_divergent() {
        let c = vec![2.0; 100];
        assert_eq!(psrf(&[&c, &c]).unwrap(), 1.0);
        let mut rng = seeded_rng(1);
        let a: Vec<f64> = (0..1000).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect();
        let b: Vec<f64> = (0..1000).map(|_| sample_normal(&mut rng, 10.0, 1.0)).collect();
        assert!(psrf(&[&a, &b]).unwrap() > 3.0);
        assert_eq!(psrf(&[&a[..10], &b[..11]]), Err(Error::UnequalChains));
        assert!(psrf(&[&a]).is_err());
        assert!(psrf(&[&a[..3], &b[..3]]).is_err());
    }

    #[test]
    fn psrf_iid_chains_near_one() {
        let mut rng = seeded_rng(2);
        let chains: Vec<Vec<f64>> =
            (0..4).map(|_| (0..10_000).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect()).collect();
        let slices: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let r = psrf(&slices).unwrap();
        assert!((1.0..=1.05).contains(&r));
    }

    #[test]
    fn psrf_affine_invariant() {
        let mut rng = seeded_rng(3);
        let a: Vec<f64> = (0..500).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect();
        let b: Vec<f64> = (0..500).map(|_| sample_normal(&mut rng, 0.3, 1.0)).collect();
        let t = |v: &[f64]| v.iter().map(|x| 3.0 * x - 7.0).collect::<Vec<_>>();
        let r1 = psrf(&[&a, &b]).unwrap();
        let r2 = psrf(&[&t(&a), &t(&b)]).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn quantiles_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile_sorted(&v, 0.5) - 50.5).abs() < 1e-12);
        assert!((quantile_sorted(&v, 0.025) - 3.475).abs() < 1e-12);
        let s = summarize("x", &[v]).unwrap();
        assert!(s.quantiles.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(s.psrf, None);
    }

    #[test]
    fn single_draw_summary() {
        let s = summarize("b", &[vec![1.5]]).unwrap();
        assert_eq!((s.mean, s.sd, s.quantiles[2]), (1.5, 0.0, 1.5));
        assert!(summarize("b", &[vec![]]).is_err());
    }

    #[test]
    fn summary_ignores_draw_order() {
        let mut rng = seeded_rng(5);
        let a: Vec<f64> = (0..101).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect();
        let b: Vec<f64> = (0..101).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect();
        let s1 = summarize("v", &[a.clone(), b.clone()]).unwrap();
        let s2 = summarize("v", &[b, a]).unwrap();
        assert_eq!(s1.quantiles, s2.quantiles);
        assert!((s1.mean - s2.mean).abs() < 1e-15);
    }

    #[test]
    fn ess_of_iid_and_sticky_chains() {
        let mut rng = seeded_rng(6);
        let iid: Vec<f64> = (0..4000).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect();
        assert!(effective_sample_size(&iid) > 3000.0);
        let mut ar = vec![0.0; 4000];
        for i in 1..4000 {
            ar[i] = 0.95 * ar[i - 1] + sample_normal(&mut rng, 0.0, 1.0);
        }
        // AR(1) with φ = 0.95 has ESS ≈ n (1 - φ)/(1 + φ) ≈ 103
        let e = effective_sample_size(&ar);
        assert!(e > 40.0 && e < 250.0, "{e}");
    }

    fn one_draw_chain(clusters: Vec<ClusterParams>, sizes: Vec<usize>) -> ChainOutput {
        ChainOutput {
            draws: vec![Draw { iteration: 1, reg: RegressionParams::zeros(1, 1), nu: Some(1.0), sizes, clusters }],
            acceptance: AcceptanceRates::default(),
            elapsed_secs: None,
        }
    }

    #[test]
    fn grid_single_standard_component() {
        let t = ClusterParams::new(0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let chain = one_draw_chain(vec![t], vec![10]);
        let spec = GridSpec { x_min: -3.0, x_max: 3.0, y_min: -2.0, y_max: 2.0, nx: 7, ny: 5 };
        let g = error_density_grid(&[chain], &spec).unwrap();
        for (j, &y) in g.ys.iter().enumerate() {
            for (i, &x) in g.xs.iter().enumerate() {
                let want = -LN_2PI - 0.5 * (x * x + y * y);
                assert!((g.at(i, j) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn grid_integrates_to_one() {
        let a = ClusterParams::new(0.6, -0.6, 0.3, 0.3, 0.5).unwrap();
        let b = ClusterParams::new(-0.6, 0.6, 0.3, 0.3, 0.5).unwrap();
        let chain = one_draw_chain(vec![a, b], vec![3, 7]);
        let r = 8.0 * 0.3f64.sqrt();
        let spec = GridSpec { x_min: -0.6 - r, x_max: 0.6 + r, y_min: -0.6 - r, y_max: 0.6 + r, nx: 241, ny: 241 };
        let g = error_density_grid(core::slice::from_ref(&chain), &spec).unwrap();
        let (dx, dy) = (g.xs[1] - g.xs[0], g.ys[1] - g.ys[0]);
        let mut total = 0.0;
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let w = if i == 0 || i == spec.nx - 1 { 0.5 } else { 1.0 }
                    * if j == 0 || j == spec.ny - 1 { 0.5 } else { 1.0 };
                total += w * g.at(i, j).exp() * dx * dy;
            }
        }
        assert!((total - 1.0).abs() < 0.01, "{total}");
        let empty = ChainOutput { draws: vec![], ..chain };
        assert!(error_density_grid(&[empty], &spec).is_err());
    }

    #[test]
    fn ks_tests_behave() {
        let mut rng = seeded_rng(7);
        let s: Vec<f64> = (0..2000).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect();
        let (_, p) = ks_one_sample(&s, std_normal_cdf).unwrap();
        assert!(p > 0.01);
        let (_, p) = ks_one_sample(&s, |x| std_normal_cdf(x - 0.3)).unwrap();
        assert!(p < 1e-6);
        let t: Vec<f64> = (0..1500).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect();
        assert!(ks_two_sample(&s, &t).unwrap().1 > 0.01);
        let u: Vec<f64> = t.iter().map(|x| x + 0.5).collect();
        assert!(ks_two_sample(&s, &u).unwrap().1 < 1e-6);
    }

    #[test]
    fn rand_index_cases() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!(ari < 0.5 && ari > 0.0);
    }
}
