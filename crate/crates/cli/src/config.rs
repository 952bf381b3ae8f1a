//! Flat `key = value` configuration files and the typed settings built from
//! them.
//!
//! A file is a list of `key = value` lines. Lines starting with `#` or `;`
//! are comments, and a `[section]` header prefixes the keys that follow
//! with `section.`. Command-line flags are applied on top of the merged
//! files, so flags always win.

use crate::dataset::ColumnMap;
use crate::error::{CliError, CliResult};
use dpmiv_core::diagnostics::GridSpec;
use dpmiv_core::dpmiv::{CoefPrior, DpmivConfig, InitMode, WidthAdaptation};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "DPMIV_THREADS";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected `key = value`", i + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::config(format!("line {}: empty key", i + 1)));
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            if entries.insert(full.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::config(format!("line {}: duplicate key `{full}`", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Parses `key=value` as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (k, v) =
            pair.split_once('=').ok_or_else(|| CliError::config(format!("`{pair}` is not of the form key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    /// Copies every entry of `other` over this one.
    pub fn merge(&mut self, other: KeyValues) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Typed access to a [`KeyValues`] that remembers which keys were read, so
/// leftovers can be reported as unknown.
pub struct Keys<'a> {
    kv: &'a KeyValues,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Keys<'a> {
    pub fn new(kv: &'a KeyValues) -> Self {
        Self { kv, used: RefCell::new(BTreeSet::new()) }
    }

    pub fn raw(&self, key: &str) -> Option<&'a str> {
        let v = self.kv.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v)
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| CliError::config(format!("key `{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    pub fn flag(&self, key: &str) -> CliResult<bool> {
        match self.raw(key) {
            None => Ok(false),
            Some(v) => {
                parse_bool(v).ok_or_else(|| CliError::config(format!("key `{key}`: expected true or false, got `{v}`")))
            }
        }
    }

    pub fn path(&self, key: &str) -> CliResult<PathBuf> {
        self.raw(key).map(PathBuf::from).ok_or_else(|| CliError::config(format!("missing required key `{key}`")))
    }

    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.raw(key).map(split_list)
    }

    /// Every key under `prefix`, with the prefix stripped.
    pub fn with_prefix(&self, prefix: &str) -> Vec<(String, &'a str)> {
        let hits: Vec<(String, &'a str)> = self
            .kv
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|rest| (rest.to_string(), v.as_str())))
            .collect();
        let mut used = self.used.borrow_mut();
        for (rest, _) in &hits {
            used.insert(format!("{prefix}{rest}"));
        }
        hits
    }

    /// Fails on keys that nothing read.
    pub fn finish(self) -> CliResult<()> {
        let used = self.used.into_inner();
        let unknown: Vec<&str> = self.kv.entries.keys().filter(|k| !used.contains(*k)).map(String::as_str).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::config(format!("unknown configuration keys: {}", unknown.join(", "))))
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

pub fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

pub fn parse_init(v: &str) -> CliResult<InitMode> {
    match v {
        "single" => Ok(InitMode::SingleCluster),
        "prior" => Ok(InitMode::PriorDraw),
        "aft" => Ok(InitMode::AftWarm),
        _ => Err(CliError::config(format!("init must be single, prior or aft, got `{v}`"))),
    }
}

pub fn init_name(mode: InitMode) -> &'static str {
    match mode {
        InitMode::SingleCluster => "single",
        InitMode::PriorDraw => "prior",
        InitMode::AftWarm => "aft",
    }
}

/// Worker count: the explicit setting, else the environment variable, else
/// every available core.
pub fn resolve_threads(explicit: Option<usize>) -> CliResult<usize> {
    if let Some(t) = explicit {
        return if t == 0 { Err(CliError::config("threads must be at least 1")) } else { Ok(t) };
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(CliError::config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, usize::from))
}

/// Chain and sampler settings shared by fits and benchmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    pub config: DpmivConfig,
    pub n_chains: usize,
    pub init: InitMode,
    pub threads: Option<usize>,
}

impl ChainSettings {
    pub fn from_keys(keys: &Keys) -> CliResult<Self> {
        let mut c = DpmivConfig::default();
        let s = &mut c.sampler;
        s.control.n_iter = keys.get("iterations", s.control.n_iter)?;
        s.control.burn_in = keys.get("burn_in", s.control.burn_in)?;
        s.control.thinning = keys.get("thinning", s.control.thinning)?;
        s.control.seed = keys.get("seed", s.control.seed)?;
        s.prior_only = keys.flag("prior_only")?;
        if keys.flag("adapt")? {
            let d = WidthAdaptation::default();
            s.adaptation = Some(WidthAdaptation {
                target: keys.get("adapt.target", d.target)?,
                batch: keys.get("adapt.batch", d.batch)?,
            });
        } else if keys.raw("adapt.target").is_some() || keys.raw("adapt.batch").is_some() {
            return Err(CliError::config("adapt.target and adapt.batch need adapt = true"));
        }

        s.h0.mu1_mean = keys.get("h0.mu1_mean", s.h0.mu1_mean)?;
        s.h0.mu1_var = keys.get("h0.mu1_var", s.h0.mu1_var)?;
        s.h0.mu2_mean = keys.get("h0.mu2_mean", s.h0.mu2_mean)?;
        s.h0.mu2_var = keys.get("h0.mu2_var", s.h0.mu2_var)?;
        s.h0.var_shape = keys.get("h0.var_shape", s.h0.var_shape)?;
        s.h0.var_scale = keys.get("h0.var_scale", s.h0.var_scale)?;

        s.proposal_width_beta1 = keys.get("width.beta1", s.proposal_width_beta1)?;
        s.proposal_width_other = keys.get("width.other", s.proposal_width_other)?;
        s.cluster_widths.mu = keys.get("width.mu", s.cluster_widths.mu)?;
        s.cluster_widths.log_var = keys.get("width.log_var", s.cluster_widths.log_var)?;
        s.cluster_widths.rho = keys.get("width.rho", s.cluster_widths.rho)?;

        s.reg_prior.default_var = keys.get("prior.default_var", s.reg_prior.default_var)?;
        let mut coefs: BTreeMap<String, (Option<f64>, Option<f64>)> = BTreeMap::new();
        for (rest, value) in keys.with_prefix("prior.") {
            if rest == "default_var" {
                continue;
            }
            let (name, field) = rest.rsplit_once('.').ok_or_else(|| {
                CliError::config(format!("key `prior.{rest}` should be prior.<coefficient>.mean or .var"))
            })?;
            let v: f64 =
                value.parse().map_err(|_| CliError::config(format!("key `prior.{rest}`: cannot parse `{value}`")))?;
            let slot = coefs.entry(name.to_string()).or_default();
            match field {
                "mean" => slot.0 = Some(v),
                "var" => slot.1 = Some(v),
                _ => return Err(CliError::config(format!("key `prior.{rest}` should end in .mean or .var"))),
            }
        }
        let default_var = s.reg_prior.default_var;
        s.reg_prior.overrides = coefs
            .into_iter()
            .map(|(name, (mean, var))| (name, CoefPrior { mean: mean.unwrap_or(0.0), var: var.unwrap_or(default_var) }))
            .collect();

        c.m_aux = keys.get("dp.m_aux", c.m_aux)?;
        c.nu_lo = keys.get("dp.nu_lo", c.nu_lo)?;
        c.nu_hi = keys.get("dp.nu_hi", c.nu_hi)?;
        c.omega = keys.get("dp.omega", c.omega)?;
        c.nu_proposal_width = keys.get("dp.nu_width", c.nu_proposal_width)?;
        c.validate().map_err(|e| CliError::config(e.to_string()))?;

        let n_chains = keys.get("chains", 4usize)?;
        if n_chains == 0 {
            return Err(CliError::config("chains must be at least 1"));
        }
        let init = match keys.raw("init") {
            Some(v) => parse_init(v)?,
            None => InitMode::default(),
        };
        let threads = keys.opt("threads")?;
        Ok(Self { config: c, n_chains, init, threads })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Dpmiv,
    Pbiv,
    Aft,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dpmiv => "dpmiv",
            ModelKind::Pbiv => "pbiv",
            ModelKind::Aft => "aft",
        }
    }
}

pub const DEFAULT_GRID: GridSpec = GridSpec { x_min: -4.0, x_max: 4.0, y_min: -4.0, y_max: 4.0, nx: 81, ny: 81 };

pub fn grid_from_keys(keys: &Keys) -> CliResult<GridSpec> {
    let d = DEFAULT_GRID;
    Ok(GridSpec {
        x_min: keys.get("grid.x_min", d.x_min)?,
        x_max: keys.get("grid.x_max", d.x_max)?,
        y_min: keys.get("grid.y_min", d.y_min)?,
        y_max: keys.get("grid.y_max", d.y_max)?,
        nx: keys.get("grid.nx", d.nx)?,
        ny: keys.get("grid.ny", d.ny)?,
    })
}

/// Everything one fit needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub data: PathBuf,
    pub columns: ColumnMap,
    pub log_time: bool,
    pub chains: ChainSettings,
    pub out_dir: PathBuf,
    /// Density grid to export after a mixture fit.
    pub grid: Option<GridSpec>,
}

impl RunConfig {
    pub fn from_keys(model: ModelKind, kv: &KeyValues) -> CliResult<Self> {
        let keys = Keys::new(kv);
        let data = keys.path("data")?;
        let out_dir = keys.path("out_dir")?;
        let columns = ColumnMap::from_keys(&keys);
        let log_time = keys.flag("log_time")?;
        let chains = ChainSettings::from_keys(&keys)?;
        let want_grid = keys.flag("grid")?;
        let grid_spec = grid_from_keys(&keys)?;
        if want_grid && model != ModelKind::Dpmiv {
            return Err(CliError::config("density grids are only produced by fit-dpmiv"));
        }
        keys.finish()?;
        Ok(Self { model, data, columns, log_time, chains, out_dir, grid: want_grid.then_some(grid_spec) })
    }
}
