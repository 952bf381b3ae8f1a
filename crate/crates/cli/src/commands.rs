//! The work behind each subcommand, callable without going through argument
//! parsing.

use crate::config::{init_name, resolve_threads, ChainSettings, KeyValues, Keys, ModelKind, RunConfig};
use crate::dataset::{load_dataset, render_dataset, save_dataset, ColumnMap};
use crate::error::{CliError, CliResult};
use crate::output::*;
use dpmiv_core::aft::{fit_aft, AftFit};
use dpmiv_core::diagnostics::{error_density_grid, summarize, summarize_chains, DensityGrid, GridSpec, ParamSummary};
use dpmiv_core::dpmiv::{ChainOutput, DpmivChain};
use dpmiv_core::model::{Dataset, Observation};
use dpmiv_core::pbiv::PbivChain;
use dpmiv_core::sim::{
    aggregate, builtin_scenario, estimate, generate_dataset, replicate_dataset, CensoringSpec, Estimator, MetricsTable,
    ReplicationSettings, SimTruth, TRUE_BETA1,
};
use dpmiv_core::stats::{derive_seed, seeded_rng};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let n = resolve_threads(threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {n} worker threads: {e}")))
}

/// `data.csv` becomes `data.truth.json`.
pub fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.truth.json"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateArgs {
    pub scenario: u32,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Write bounds as event times rather than log times.
    pub time_scale: bool,
    pub censoring: CensoringSpec,
}

#[derive(Serialize)]
struct TruthFile<'a> {
    scenario: u32,
    n: usize,
    seed: u64,
    beta1: f64,
    time_scale: bool,
    y: &'a [f64],
    xi1: &'a [f64],
    xi2: &'a [f64],
    component: &'a [usize],
}

/// Simulates one dataset and writes it with its truth sidecar.
pub fn simulate(args: &SimulateArgs) -> CliResult<(Dataset, SimTruth)> {
    let spec = builtin_scenario(args.scenario)?;
    let mut rng = seeded_rng(args.seed);
    let (data, truth) = generate_dataset(&spec, args.n, &args.censoring, &mut rng)?;
    save_dataset(&args.out, &data, args.time_scale)?;
    let sidecar = TruthFile {
        scenario: args.scenario,
        n: args.n,
        seed: args.seed,
        beta1: truth.beta1,
        time_scale: args.time_scale,
        y: &truth.y,
        xi1: &truth.xi1,
        xi2: &truth.xi2,
        component: &truth.component,
    };
    let mut json = serde_json::to_string_pretty(&sidecar).expect("truth serializes");
    json.push('\n');
    write_atomic(&truth_path(&args.out), json.as_bytes())?;
    Ok((data, truth))
}

fn data_info(data: &Dataset) -> DataInfo {
    let [left, interval, right, exact] = data.count_by_code();
    DataInfo { n_obs: data.len(), p: data.p(), q: data.q(), left, interval, right, exact }
}

/// Runs the configured chains in parallel. Chain `c` uses seed
/// `derive_seed(seed, c)`; results come back in chain order whatever the
/// scheduling.
pub fn run_chains(data: &Dataset, model: ModelKind, settings: &ChainSettings) -> CliResult<Vec<ChainOutput>> {
    let run = |c: usize| -> CliResult<ChainOutput> {
        let mut cfg = settings.config.clone();
        cfg.sampler.control.seed = derive_seed(settings.config.sampler.control.seed, c as u64);
        let start = Instant::now();
        let mut out = match model {
            ModelKind::Dpmiv => DpmivChain::new(data, &cfg, settings.init)?.run(data)?,
            ModelKind::Pbiv => PbivChain::new(data, &cfg.sampler, settings.init)?.run(data)?,
            ModelKind::Aft => return Err(CliError::config("the AFT baseline has no chains")),
        };
        out.elapsed_secs = Some(start.elapsed().as_secs_f64());
        Ok(out)
    };
    pool(settings.threads)?.install(|| (0..settings.n_chains).into_par_iter().map(run).collect())
}

/// Pooled summary of finished chains.
pub fn summarize_fit(
    model: ModelKind,
    data: &Dataset,
    settings: &ChainSettings,
    chains: &[ChainOutput],
    total_secs: f64,
) -> CliResult<FitSummary> {
    let control = settings.config.sampler.control;
    let summaries = summarize_chains(chains)?;
    let draws_per_chain = chains.iter().map(|c| c.draws.len()).min().unwrap_or(0);
    let flagged: Vec<String> = summaries
        .iter()
        .filter(|s| s.psrf.is_some_and(|r| r.is_nan() || r > PSRF_THRESHOLD))
        .map(|s| s.name.clone())
        .collect();
    let psrf_available = summaries.iter().all(|s| s.psrf.is_some());
    let mean_k = (model == ModelKind::Dpmiv).then(|| {
        let ks: Vec<f64> = chains.iter().flat_map(|c| c.draws.iter().map(|d| d.k() as f64)).collect();
        ks.iter().sum::<f64>() / ks.len() as f64
    });
    Ok(FitSummary {
        schema_version: SCHEMA_VERSION,
        model: model.name().into(),
        data: data_info(data),
        sampling: Some(ChainInfo {
            chains: chains.len(),
            iterations: control.n_iter,
            burn_in: control.burn_in,
            thinning: control.thinning,
            seed: control.seed,
            init: init_name(settings.init).into(),
            adapt: settings.config.sampler.adaptation.is_some(),
            draws_per_chain,
            low_sample: draws_per_chain < LOW_SAMPLE_DRAWS,
        }),
        convergence: Some(Convergence {
            psrf_threshold: PSRF_THRESHOLD,
            psrf_available,
            converged: psrf_available && flagged.is_empty(),
            flagged,
        }),
        parameters: summaries.iter().map(ParamJson::from).collect(),
        acceptance: chains
            .iter()
            .enumerate()
            .map(|(c, out)| ChainAcceptance {
                chain: c + 1,
                rates: out.acceptance.iter().map(|(name, r)| (name.to_string(), r)).collect(),
            })
            .collect(),
        mean_k,
        aft: None,
        timing: Timing { chain_secs: chains.iter().map(|c| c.elapsed_secs.unwrap_or(0.0)).collect(), total_secs },
    })
}

pub fn aft_summary(data: &Dataset, fit: &AftFit, total_secs: f64) -> FitSummary {
    FitSummary {
        schema_version: SCHEMA_VERSION,
        model: ModelKind::Aft.name().into(),
        data: data_info(data),
        sampling: None,
        convergence: None,
        parameters: Vec::new(),
        acceptance: Vec::new(),
        mean_k: None,
        aft: Some(AftJson::from(fit)),
        timing: Timing { chain_secs: Vec::new(), total_secs },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub summary: FitSummary,
    pub files: Vec<PathBuf>,
}

/// Loads the data, fits the configured model and writes every result file
/// into the output directory.
pub fn fit(cfg: &RunConfig) -> CliResult<FitReport> {
    let start = Instant::now();
    let data = load_dataset(&cfg.data, &cfg.columns, cfg.log_time)?;
    create_dir(&cfg.out_dir)?;
    let mut files = Vec::new();
    let summary = if cfg.model == ModelKind::Aft {
        let fit = fit_aft(&data)?;
        aft_summary(&data, &fit, start.elapsed().as_secs_f64())
    } else {
        let chains = run_chains(&data, cfg.model, &cfg.chains)?;
        for (c, out) in chains.iter().enumerate() {
            for (path, text) in [
                (trace_path(&cfg.out_dir, c + 1), render_trace(c + 1, out)),
                (clusters_path(&cfg.out_dir, c + 1), render_clusters(c + 1, out)),
            ] {
                write_atomic(&path, text.as_bytes())?;
                files.push(path);
            }
        }
        if let Some(spec) = &cfg.grid {
            let path = cfg.out_dir.join("density_grid.csv");
            write_atomic(&path, render_grid(&error_density_grid(&chains, spec)?).as_bytes())?;
            files.push(path);
        }
        summarize_fit(cfg.model, &data, &cfg.chains, &chains, start.elapsed().as_secs_f64())?
    };
    let path = cfg.out_dir.join("summary.json");
    write_atomic(&path, summary.to_json().as_bytes())?;
    files.push(path);
    Ok(FitReport { summary, files })
}

/// Settings of a benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchArgs {
    pub scenarios: Vec<u32>,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub estimators: Vec<Estimator>,
    pub settings: ReplicationSettings,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

fn parse_item<T: std::str::FromStr>(key: &str, s: &str) -> CliResult<T> {
    s.parse().map_err(|_| CliError::config(format!("`{key}`: cannot parse `{s}`")))
}

impl BenchArgs {
    pub fn from_keys(kv: &KeyValues) -> CliResult<Self> {
        let keys = Keys::new(kv);
        let parse_list = |key: &str, default: &str| -> CliResult<Vec<String>> {
            let v = keys.list(key).unwrap_or_else(|| crate::config::split_list(default));
            if v.is_empty() {
                Err(CliError::config(format!("`{key}` is empty")))
            } else {
                Ok(v)
            }
        };
        let scenarios = parse_list("scenarios", "1")?
            .iter()
            .map(|s| parse_item("scenarios", s))
            .collect::<CliResult<Vec<u32>>>()?;
        let ns = parse_list("n", "300")?.iter().map(|s| parse_item("n", s)).collect::<CliResult<Vec<usize>>>()?;
        let estimators = parse_list("estimators", "dpmiv,pbiv,aft")?
            .iter()
            .map(|s| Estimator::parse(s).map_err(|e| CliError::config(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?;
        let reps = keys.get("reps", 20usize)?;
        if reps < 2 {
            return Err(CliError::config("reps must be at least 2"));
        }
        for &s in &scenarios {
            builtin_scenario(s).map_err(|e| CliError::config(e.to_string()))?;
        }
        let d = CensoringSpec::default();
        let censoring = CensoringSpec {
            exact_fraction: keys.get("censoring.exact_fraction", d.exact_fraction)?,
            rate_l: keys.get("censoring.rate_l", d.rate_l)?,
            rate_gap: keys.get("censoring.rate_gap", d.rate_gap)?,
        };
        censoring.validate().map_err(|e| CliError::config(e.to_string()))?;
        let chains = ChainSettings::from_keys(&keys)?;
        let out = keys.path("out")?;
        keys.finish()?;
        Ok(Self {
            scenarios,
            ns,
            reps,
            estimators,
            seed: chains.config.sampler.control.seed,
            threads: chains.threads,
            settings: ReplicationSettings {
                config: chains.config,
                n_chains: chains.n_chains,
                init: chains.init,
                censoring,
            },
            out,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub table: MetricsTable,
    pub replicates: Vec<ReplicateRow>,
    /// Cells where every replicate failed, so no row could be produced.
    pub empty_cells: Vec<String>,
}

/// `metrics.csv` becomes `metrics.replicates.csv`.
pub fn replicates_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "metrics".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.replicates.csv"))
}

/// Runs every (scenario, n, replicate) in parallel and aggregates per
/// (scenario, n, estimator). Replicate `r` uses the same dataset seed as
/// the sequential harness, so results match it exactly.
pub fn bench(args: &BenchArgs) -> CliResult<BenchReport> {
    let specs = args.scenarios.iter().map(|&s| Ok((s, builtin_scenario(s)?))).collect::<CliResult<Vec<_>>>()?;
    let tasks: Vec<(usize, usize, usize)> = (0..specs.len())
        .flat_map(|si| args.ns.iter().flat_map(move |&n| (0..args.reps).map(move |rep| (si, n, rep))))
        .collect();
    let run = |&(si, n, rep): &(usize, usize, usize)| -> Vec<ReplicateRow> {
        let (scenario, spec) = &specs[si];
        let row = |estimator: Estimator, result| ReplicateRow {
            scenario: *scenario,
            n,
            replicate: rep,
            estimator: estimator.name(),
            result,
        };
        match replicate_dataset(spec, n, &args.settings.censoring, rep, args.seed) {
            Err(e) => args.estimators.iter().map(|&est| row(est, Err(format!("simulation failed: {e}")))).collect(),
            Ok((data, _)) => args
                .estimators
                .iter()
                .map(|&est| row(est, estimate(&data, est, &args.settings, rep, args.seed).map_err(|e| e.to_string())))
                .collect(),
        }
    };
    let replicates: Vec<ReplicateRow> = pool(args.threads)?.install(|| tasks.par_iter().flat_map_iter(run).collect());

    let mut table = MetricsTable::default();
    let mut empty_cells = Vec::new();
    for (scenario, _) in &specs {
        for &n in &args.ns {
            for &est in &args.estimators {
                let cell: Vec<&ReplicateRow> = replicates
                    .iter()
                    .filter(|r| r.scenario == *scenario && r.n == n && r.estimator == est.name())
                    .collect();
                let records: Vec<_> = cell.iter().filter_map(|r| r.result.as_ref().ok().cloned()).collect();
                let failures = cell.len() - records.len();
                match aggregate(*scenario, n, est, TRUE_BETA1, &records, failures) {
                    Ok(row) => table.rows.push(row),
                    Err(e) => empty_cells.push(format!("scenario {scenario}, n {n}, {}: {e}", est.name())),
                }
            }
        }
    }
    write_atomic(&args.out, render_metrics(&table).as_bytes())?;
    write_atomic(&replicates_path(&args.out), render_replicates(&replicates).as_bytes())?;
    Ok(BenchReport { table, replicates, empty_cells })
}

/// Plain-text table of a benchmark for the terminal.
pub fn render_bench_summary(report: &BenchReport) -> String {
    let mut s = format!(
        "{:>8} {:>6} {:>9} {:>5} {:>8} {:>8} {:>8} {:>6} {:>7}\n",
        "scenario", "n", "estimator", "reps", "failures", "bias", "sd", "cp", "mean_k"
    );
    for r in &report.table.rows {
        let k = r.mean_k.map_or("-".to_string(), |k| format!("{k:.2}"));
        s += &format!(
            "{:>8} {:>6} {:>9} {:>5} {:>8} {:>8.3} {:>8.3} {:>5.0}% {:>7}\n",
            r.scenario,
            r.n,
            r.estimator.name(),
            r.reps,
            r.failures,
            r.bias,
            r.sd,
            100.0 * r.cp,
            k
        );
    }
    for cell in &report.empty_cells {
        s += &format!("no estimates for {cell}\n");
    }
    s
}

/// Summaries recomputed from the trace files of a fit directory.
pub fn diagnose(run_dir: &Path) -> CliResult<Vec<ParamSummary>> {
    let traces = chain_files(run_dir, "trace_chain")?.iter().map(|p| read_trace(p)).collect::<CliResult<Vec<_>>>()?;
    let mut names: Vec<&String> = traces[0].keys().collect();
    let order = ["beta1", "k", "nu"];
    names.sort_by_key(|n| (order.iter().position(|o| o == n).unwrap_or(order.len()), n.to_string()));
    let mut out = Vec::new();
    for name in names {
        let per_chain: Option<Vec<Vec<f64>>> = traces.iter().map(|t| t.get(name).cloned()).collect();
        if let Some(chains) = per_chain {
            out.push(summarize(name, &chains)?);
        }
    }
    Ok(out)
}

pub fn render_diagnostics(summaries: &[ParamSummary]) -> String {
    let mut s = format!(
        "{:<12} {:>10} {:>9} {:>10} {:>10} {:>10} {:>7} {:>8}\n",
        "parameter", "mean", "sd", "2.5%", "50%", "97.5%", "psrf", "ess"
    );
    for p in summaries {
        let psrf = p.psrf.map_or("-".to_string(), |r| format!("{r:.3}"));
        let flag = if p.psrf.is_some_and(|r| r.is_nan() || r > PSRF_THRESHOLD) { "  not converged" } else { "" };
        s += &format!(
            "{:<12} {:>10.4} {:>9.4} {:>10.4} {:>10.4} {:>10.4} {:>7} {:>8.0}{flag}\n",
            p.name, p.mean, p.sd, p.quantiles[0], p.quantiles[2], p.quantiles[4], psrf, p.ess
        );
    }
    s
}

/// The error density of a fit directory's cluster snapshots.
pub fn density_grid(run_dir: &Path, spec: &GridSpec) -> CliResult<DensityGrid> {
    let chains =
        chain_files(run_dir, "clusters_chain")?.iter().map(|p| read_clusters(p)).collect::<CliResult<Vec<_>>>()?;
    Ok(error_density_grid(&chains, spec)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElicitArgs {
    pub data: PathBuf,
    pub columns: ColumnMap,
    pub log_time: bool,
    pub split_fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub analysis_out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElicitReport {
    pub fit: AftFit,
    pub train_rows: Vec<usize>,
    pub analysis_rows: Vec<usize>,
    /// Contents of the prior file, loadable with `--config`.
    pub priors: KeyValues,
}

/// Zero-based row indices of the training split: a seeded shuffle of all
/// rows, first `ceil(fraction * n)` taken, returned in file order.
pub fn training_rows(n: usize, fraction: f64, seed: u64) -> CliResult<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CliError::config(format!("split fraction must be in (0, 1], got {fraction}")));
    }
    let take = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let mut chosen = idx[..take].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

fn subset(data: &Dataset, rows: &[usize]) -> Vec<Observation> {
    rows.iter().map(|&i| data.observations()[i].clone()).collect()
}

/// Fits the AFT baseline on a random training split and turns its
/// estimates into second-stage priors. The remaining rows are written as
/// the analysis set.
pub fn elicit_priors(args: &ElicitArgs) -> CliResult<ElicitReport> {
    let data = load_dataset(&args.data, &args.columns, args.log_time)?;
    let train_rows = training_rows(data.len(), args.split_fraction, args.seed)?;
    let train = subset(&data, &train_rows);
    let usable = train.iter().filter(|o| o.outcome.bounds().0.is_some()).count();
    let need = data.p() + 3;
    if usable < need {
        return Err(CliError::config(format!(
            "training split has {usable} rows that are not right-censored; need at least {need} (raise the split fraction)"
        )));
    }
    let fit = fit_aft(&Dataset::new(train)?)?;
    let analysis_rows: Vec<usize> = (0..data.len()).filter(|i| train_rows.binary_search(i).is_err()).collect();

    let mut priors = KeyValues::default();
    priors.set("prior.beta1.mean", fit.coef_x.to_string());
    priors.set("prior.beta1.var", (fit.se.coef_x * fit.se.coef_x).to_string());
    for (j, (c, se)) in fit.coef_z.iter().zip(&fit.se.coef_z).enumerate() {
        priors.set(format!("prior.beta2_{}.mean", j + 1), c.to_string());
        priors.set(format!("prior.beta2_{}.var", j + 1), (se * se).to_string());
    }
    priors.set("h0.mu2_mean", fit.intercept.to_string());
    priors.set("h0.mu2_var", (fit.se.intercept * fit.se.intercept + fit.scale * fit.scale).to_string());

    let mut text = format!(
        "# Second-stage priors elicited from a log-normal AFT fit on a training split.\n\
         # source: {}\n\
         # training rows: {} of {} (fraction {}, seed {})\n\
         #\n\
         # prior.beta1.*   mean = AFT coefficient of x, var = its squared standard error\n\
         # prior.beta2_j.* mean = AFT coefficient of z_j, var = its squared standard error\n\
         # h0.mu2_mean     = AFT intercept\n\
         # h0.mu2_var      = squared standard error of the intercept plus the squared AFT scale,\n\
         #                   so mixture components may sit anywhere the residuals do\n\
         # First-stage coefficients and the remaining base-measure settings keep their defaults.\n\
         # Use with: dpmiv fit-dpmiv --config <this file> ...\n",
        args.data.display(),
        train_rows.len(),
        data.len(),
        args.split_fraction,
        args.seed
    );
    for (k, v) in priors.iter() {
        text += &format!("{k} = {v}\n");
    }
    write_atomic(&args.out, text.as_bytes())?;
    let analysis = subset(&data, &analysis_rows);
    write_atomic(&args.analysis_out, render_dataset(&analysis, data.p(), data.q(), args.log_time).as_bytes())?;
    Ok(ElicitReport { fit, train_rows, analysis_rows, priors })
}

/// Dataset counts by censoring code, for the simulate command's report.
pub fn censoring_counts(data: &Dataset) -> BTreeMap<&'static str, usize> {
    let [l, i, r, e] = data.count_by_code();
    BTreeMap::from([("left", l), ("interval", i), ("right", r), ("exact", e)])
}
