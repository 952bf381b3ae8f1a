//! Result files: traces, cluster snapshots, density grids, metrics tables
//! and the JSON fit summary. Every file is written to a temporary sibling
//! and renamed into place.

use crate::error::{CliError, CliResult};
use dpmiv_core::aft::AftFit;
use dpmiv_core::diagnostics::{DensityGrid, ParamSummary};
use dpmiv_core::dpmiv::{AcceptanceRates, ChainOutput, Draw};
use dpmiv_core::model::{ClusterParams, RegressionParams};
use dpmiv_core::sim::{EstimateRecord, MetricsTable};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Version of the summary JSON layout. Bumped on any incompatible change.
pub const SCHEMA_VERSION: u32 = 1;

/// Parameters whose PSRF exceeds this are flagged as not converged.
pub const PSRF_THRESHOLD: f64 = 1.1;

/// Fewer retained draws per chain than this marks a summary as low-sample.
pub const LOW_SAMPLE_DRAWS: usize = 100;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn trace_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("trace_chain{chain}.csv"))
}

pub fn clusters_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("clusters_chain{chain}.csv"))
}

fn csv_text(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Long-format trace: `iteration,chain,parameter,value`. Chains are
/// numbered from 1.
pub fn render_trace(chain: usize, out: &ChainOutput) -> String {
    let names = out.parameter_names();
    let traces: Vec<Vec<f64>> = names.iter().map(|n| out.trace(n).unwrap_or_default()).collect();
    let header = ["iteration", "chain", "parameter", "value"].map(String::from).to_vec();
    let rows = out.draws.iter().enumerate().flat_map(|(d, draw)| {
        names
            .iter()
            .zip(&traces)
            .map(move |(name, t)| vec![draw.iteration.to_string(), chain.to_string(), name.clone(), t[d].to_string()])
    });
    csv_text(std::iter::once(header).chain(rows))
}

/// One row per cluster per retained draw, enough to rebuild the error
/// density later.
pub fn render_clusters(chain: usize, out: &ChainOutput) -> String {
    let header = ["iteration", "chain", "cluster", "size", "mu1", "mu2", "sigma1_sq", "sigma2_sq", "rho"]
        .map(String::from)
        .to_vec();
    let rows = out.draws.iter().flat_map(|draw| {
        draw.clusters.iter().zip(&draw.sizes).enumerate().map(move |(c, (t, size))| {
            vec![
                draw.iteration.to_string(),
                chain.to_string(),
                (c + 1).to_string(),
                size.to_string(),
                t.mu1.to_string(),
                t.mu2.to_string(),
                t.sigma1_sq.to_string(),
                t.sigma2_sq.to_string(),
                t.rho.to_string(),
            ]
        })
    });
    csv_text(std::iter::once(header).chain(rows))
}

fn read_records(path: &Path) -> CliResult<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let headers = rdr.headers().map_err(|e| CliError::format(path, e))?.clone();
    let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(|e| CliError::format(path, e))?;
    Ok((headers, rows))
}

fn expect_header(path: &Path, headers: &csv::StringRecord, want: &[&str]) -> CliResult<()> {
    if headers.iter().eq(want.iter().copied()) {
        Ok(())
    } else {
        Err(CliError::format(path, format!("expected header {}", want.join(","))))
    }
}

fn field<T: std::str::FromStr>(path: &Path, row: usize, rec: &csv::StringRecord, i: usize) -> CliResult<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| CliError::Data { path: path.into(), row, message: format!("cannot parse `{raw}`") })
}

/// Per-parameter draws of one trace file, in file order.
pub fn read_trace(path: &Path) -> CliResult<BTreeMap<String, Vec<f64>>> {
    let (headers, rows) = read_records(path)?;
    expect_header(path, &headers, &["iteration", "chain", "parameter", "value"])?;
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, rec) in rows.iter().enumerate() {
        let value: f64 = field(path, i + 1, rec, 3)?;
        out.entry(rec.get(2).unwrap_or("").to_string()).or_default().push(value);
    }
    Ok(out)
}

/// Rebuilds cluster snapshots from a clusters file. Regression coefficients
/// are not stored there and come back empty.
pub fn read_clusters(path: &Path) -> CliResult<ChainOutput> {
    let (headers, rows) = read_records(path)?;
    expect_header(
        path,
        &headers,
        &["iteration", "chain", "cluster", "size", "mu1", "mu2", "sigma1_sq", "sigma2_sq", "rho"],
    )?;
    let mut draws: Vec<Draw> = Vec::new();
    for (i, rec) in rows.iter().enumerate() {
        let row = i + 1;
        let iteration: u64 = field(path, row, rec, 0)?;
        let size: usize = field(path, row, rec, 3)?;
        let vals: Vec<f64> = (4..9).map(|c| field(path, row, rec, c)).collect::<CliResult<_>>()?;
        let theta = ClusterParams::new(vals[0], vals[1], vals[2], vals[3], vals[4]).map_err(|e| CliError::Data {
            path: path.into(),
            row,
            message: e.to_string(),
        })?;
        match draws.last_mut() {
            Some(d) if d.iteration == iteration => {
                d.sizes.push(size);
                d.clusters.push(theta);
            }
            _ => draws.push(Draw {
                iteration,
                reg: RegressionParams::zeros(0, 0),
                nu: None,
                sizes: vec![size],
                clusters: vec![theta],
            }),
        }
    }
    Ok(ChainOutput { draws, acceptance: AcceptanceRates::default(), elapsed_secs: None })
}

/// Files matching `trace_chain<k>.csv` (or the clusters equivalent) in
/// chain order.
pub fn chain_files(dir: &Path, stem: &str) -> CliResult<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(k) =
            name.strip_prefix(stem).and_then(|r| r.strip_suffix(".csv")).and_then(|k| k.parse::<usize>().ok())
        {
            found.push((k, entry.path()));
        }
    }
    if found.is_empty() {
        return Err(CliError::format(dir, format!("no {stem}<k>.csv files")));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Grid CSV: a row `x,<xs>`, a row `y,<ys>`, then `ny` rows of `nx` log
/// densities, row `j` belonging to `ys[j]`.
pub fn render_grid(grid: &DensityGrid) -> String {
    let axis =
        |label: &str, v: &[f64]| std::iter::once(label.to_string()).chain(v.iter().map(f64::to_string)).collect();
    let nx = grid.xs.len();
    let rows = grid.log_density.chunks(nx).map(|r| r.iter().map(f64::to_string).collect());
    csv_text([axis("x", &grid.xs), axis("y", &grid.ys)].into_iter().chain(rows))
}

pub fn render_metrics(table: &MetricsTable) -> String {
    let header = MetricsTable::HEADER.map(String::from).to_vec();
    let rows = table.rows.iter().map(|r| {
        vec![
            r.scenario.to_string(),
            r.n.to_string(),
            r.estimator.name().to_string(),
            r.reps.to_string(),
            r.failures.to_string(),
            r.bias.to_string(),
            r.sd.to_string(),
            r.cp.to_string(),
            r.mean_k.map_or(String::new(), |k| k.to_string()),
        ]
    });
    csv_text(std::iter::once(header).chain(rows))
}

/// Outcome of one replicate fit: the estimate, or why it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRow {
    pub scenario: u32,
    pub n: usize,
    pub replicate: usize,
    pub estimator: &'static str,
    pub result: Result<EstimateRecord, String>,
}

pub fn render_replicates(rows: &[ReplicateRow]) -> String {
    let header = ["scenario", "n", "estimator", "replicate", "estimate", "lower", "upper", "mean_k", "error"]
        .map(String::from)
        .to_vec();
    let body = rows.iter().map(|r| {
        let mut v = vec![r.scenario.to_string(), r.n.to_string(), r.estimator.to_string(), r.replicate.to_string()];
        match &r.result {
            Ok(e) => v.extend([
                e.estimate.to_string(),
                e.lower.to_string(),
                e.upper.to_string(),
                e.mean_k.map_or(String::new(), |k| k.to_string()),
                String::new(),
            ]),
            Err(msg) => v.extend([String::new(), String::new(), String::new(), String::new(), msg.clone()]),
        }
        v
    });
    csv_text(std::iter::once(header).chain(body))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    pub n_obs: usize,
    pub p: usize,
    pub q: usize,
    pub left: usize,
    pub interval: usize,
    pub right: usize,
    pub exact: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainInfo {
    pub chains: usize,
    pub iterations: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
    pub init: String,
    /// Whether proposal widths were tuned during burn-in.
    pub adapt: bool,
    pub draws_per_chain: usize,
    pub low_sample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub psrf_threshold: f64,
    /// False when PSRF could not be computed (one chain or too few draws).
    pub psrf_available: bool,
    pub converged: bool,
    /// Parameters with PSRF above the threshold.
    pub flagged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamJson {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q97_5: f64,
    pub psrf: Option<f64>,
    pub ess: f64,
    pub n_draws: usize,
}

impl From<&ParamSummary> for ParamJson {
    fn from(s: &ParamSummary) -> Self {
        let [q2_5, q25, q50, q75, q97_5] = s.quantiles;
        Self {
            name: s.name.clone(),
            mean: s.mean,
            sd: s.sd,
            q2_5,
            q25,
            q50,
            q75,
            q97_5,
            psrf: s.psrf,
            ess: s.ess,
            n_draws: s.n_draws,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainAcceptance {
    pub chain: usize,
    pub rates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AftJson {
    pub intercept: f64,
    pub coef_x: f64,
    pub coef_z: Vec<f64>,
    pub scale: f64,
    pub se_intercept: f64,
    pub se_coef_x: f64,
    pub se_coef_z: Vec<f64>,
    pub se_scale: f64,
    pub coef_x_ci95: [f64; 2],
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub max_abs_grad: f64,
}

impl From<&AftFit> for AftJson {
    fn from(f: &AftFit) -> Self {
        let (lo, hi) = f.coef_x_interval(1.959963984540054);
        Self {
            intercept: f.intercept,
            coef_x: f.coef_x,
            coef_z: f.coef_z.clone(),
            scale: f.scale,
            se_intercept: f.se.intercept,
            se_coef_x: f.se.coef_x,
            se_coef_z: f.se.coef_z.clone(),
            se_scale: f.se.scale,
            coef_x_ci95: [lo, hi],
            loglik: f.loglik,
            converged: f.converged,
            iterations: f.iterations,
            max_abs_grad: f.max_abs_grad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub chain_secs: Vec<f64>,
    pub total_secs: f64,
}

/// The `summary.json` written by every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub schema_version: u32,
    pub model: String,
    pub data: DataInfo,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sampling: Option<ChainInfo>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub convergence: Option<Convergence>,
    pub parameters: Vec<ParamJson>,
    pub acceptance: Vec<ChainAcceptance>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aft: Option<AftJson>,
    /// Wall-clock metadata; the only part of the summary that varies
    /// between identical runs.
    pub timing: Timing,
}

impl FitSummary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn parameter(&self, name: &str) -> Option<&ParamJson> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

pub fn read_summary(path: &Path) -> CliResult<FitSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dpmiv_core::diagnostics::{error_density_grid, GridSpec};

    fn chain() -> ChainOutput {
        let t = ClusterParams::new(0.1, -0.2, 1.5, 0.5, 0.25).unwrap();
        let u = ClusterParams::new(-1.0, 2.0, 0.75, 2.0, -0.5).unwrap();
        let reg = RegressionParams { alpha1: vec![0.5], alpha2: vec![], beta1: -1.0, beta2: vec![] };
        let draws = vec![
            Draw { iteration: 10, reg: reg.clone(), nu: Some(0.5), sizes: vec![3, 1], clusters: vec![t, u] },
            Draw { iteration: 20, reg, nu: Some(0.7), sizes: vec![4], clusters: vec![t] },
        ];
        ChainOutput { draws, acceptance: AcceptanceRates::default(), elapsed_secs: Some(1.0) }
    }

    #[test]
    fn trace_rows_are_long_format() {
        let text = render_trace(2, &chain());
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,chain,parameter,value"));
        assert!(text.contains("10,2,beta1,-1\n"));
        assert!(text.contains("20,2,nu,0.7\n"));
        assert!(text.contains("10,2,k,2\n"));
    }

    #[test]
    fn cluster_snapshots_round_trip_to_the_same_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = clusters_path(dir.path(), 1);
        write_atomic(&path, render_clusters(1, &chain()).as_bytes()).unwrap();
        let back = read_clusters(&path).unwrap();
        assert_eq!(back.draws.len(), 2);
        assert_eq!(back.draws[0].sizes, vec![3, 1]);
        let spec = GridSpec { x_min: -3.0, x_max: 3.0, y_min: -3.0, y_max: 3.0, nx: 7, ny: 5 };
        assert_eq!(error_density_grid(&[chain()], &spec).unwrap(), error_density_grid(&[back], &spec).unwrap());
    }

    #[test]
    fn grid_csv_has_axis_rows_then_matrix() {
        let grid = DensityGrid {
            xs: vec![0.0, 1.0, 2.0],
            ys: vec![-1.0, 1.0],
            log_density: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        assert_eq!(render_grid(&grid), "x,0,1,2\ny,-1,1\n1,2,3\n4,5,6\n");
    }

    #[test]
    fn trace_file_reads_back_by_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let path = trace_path(dir.path(), 1);
        write_atomic(&path, render_trace(1, &chain()).as_bytes()).unwrap();
        let t = read_trace(&path).unwrap();
        assert_eq!(t["nu"], vec![0.5, 0.7]);
        assert_eq!(t["k"], vec![2.0, 1.0]);
        assert_eq!(chain_files(dir.path(), "trace_chain").unwrap(), vec![path]);
    }

    #[test]
    fn atomic_write_replaces_existing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
