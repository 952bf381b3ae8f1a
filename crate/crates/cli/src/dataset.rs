//! Dataset CSV files.
//!
//! The default layout is `L,R,delta,x,z1..zp,g1..gq`. `delta` is 1 (left),
//! 2 (interval), 3 (right) or 4 (exact). Left rows need `L`, right rows need
//! `R`, and the unused bound is left blank. Missing values are always blank
//! fields, never sentinels. Rows are numbered from 1 after the header.

use crate::config::Keys;
use crate::error::{CliError, CliResult};
use crate::output::write_atomic;
use dpmiv_core::model::{CensoringCode, Dataset, Observation, Outcome};
use std::io::Read;
use std::path::Path;

/// Which header names hold each field. `None` for the covariate lists means
/// every `z<k>` (or `g<k>`) column, ordered by `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub left: String,
    pub right: String,
    pub delta: String,
    pub x: String,
    pub z: Option<Vec<String>>,
    pub g: Option<Vec<String>>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self { left: "L".into(), right: "R".into(), delta: "delta".into(), x: "x".into(), z: None, g: None }
    }
}

impl ColumnMap {
    pub fn from_keys(keys: &Keys) -> Self {
        let d = Self::default();
        let name = |key: &str, default: String| keys.raw(key).map_or(default, String::from);
        Self {
            left: name("columns.L", d.left),
            right: name("columns.R", d.right),
            delta: name("columns.delta", d.delta),
            x: name("columns.x", d.x),
            z: keys.list("columns.z"),
            g: keys.list("columns.g"),
        }
    }
}

fn numbered_columns(headers: &csv::StringRecord, prefix: char) -> Vec<String> {
    let mut found: Vec<(u64, String)> = headers
        .iter()
        .filter_map(|h| {
            let rest = h.strip_prefix(prefix)?;
            let k: u64 = rest.parse().ok().filter(|_| rest.bytes().all(|b| b.is_ascii_digit()))?;
            Some((k, h.to_string()))
        })
        .collect();
    found.sort();
    found.into_iter().map(|(_, h)| h).collect()
}

struct Layout {
    left: usize,
    right: usize,
    delta: usize,
    x: usize,
    z: Vec<(usize, String)>,
    g: Vec<(usize, String)>,
}

fn locate(headers: &csv::StringRecord, map: &ColumnMap, path: &Path) -> CliResult<Layout> {
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::format(path, format!("missing column `{name}`")))
    };
    let with_index = |names: Vec<String>| -> CliResult<Vec<(usize, String)>> {
        names.into_iter().map(|n| Ok((find(&n)?, n))).collect()
    };
    let z = with_index(map.z.clone().unwrap_or_else(|| numbered_columns(headers, 'z')))?;
    let g = with_index(map.g.clone().unwrap_or_else(|| numbered_columns(headers, 'g')))?;
    if g.is_empty() {
        return Err(CliError::format(path, "no instrument columns (g1, g2, ...)"));
    }
    Ok(Layout { left: find(&map.left)?, right: find(&map.right)?, delta: find(&map.delta)?, x: find(&map.x)?, z, g })
}

fn parse_number(field: &str, column: &str) -> Result<Option<f64>, String> {
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field.parse().map_err(|_| format!("column {column}: `{field}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("column {column}: `{field}` is not finite"));
    }
    Ok(Some(v))
}

fn required(field: &str, column: &str) -> Result<f64, String> {
    parse_number(field, column)?.ok_or_else(|| format!("column {column} is blank"))
}

fn parse_row(rec: &csv::StringRecord, lay: &Layout, map: &ColumnMap, log_time: bool) -> Result<Observation, String> {
    let field = |i: usize| rec.get(i).unwrap_or("");
    let code: i64 = field(lay.delta)
        .parse()
        .map_err(|_| format!("column {}: `{}` is not a censoring code", map.delta, field(lay.delta)))?;
    let delta = CensoringCode::from_code(code).map_err(|e| e.to_string())?;
    let mut left = parse_number(field(lay.left), &map.left)?;
    let mut right = parse_number(field(lay.right), &map.right)?;
    match delta {
        CensoringCode::Left => right = None,
        CensoringCode::Right => left = None,
        _ => {}
    }
    if log_time {
        let to_log = |v: Option<f64>, column: &str| -> Result<Option<f64>, String> {
            match v {
                Some(t) if t <= 0.0 => Err(format!("column {column}: time {t} must be positive to take logs")),
                other => Ok(other.map(f64::ln)),
            }
        };
        left = to_log(left, &map.left)?;
        right = to_log(right, &map.right)?;
    }
    let outcome = Outcome::from_bounds(left, right, delta).map_err(|e| e.to_string())?;
    let x = required(field(lay.x), &map.x)?;
    let z = lay.z.iter().map(|(i, n)| required(field(*i), n)).collect::<Result<Vec<_>, _>>()?;
    let g = lay.g.iter().map(|(i, n)| required(field(*i), n)).collect::<Result<Vec<_>, _>>()?;
    Observation::new(outcome, x, z, g).map_err(|e| e.to_string())
}

/// Reads a dataset from CSV text. `path` only labels errors.
pub fn read_dataset<R: Read>(reader: R, path: &Path, map: &ColumnMap, log_time: bool) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::format(path, e))?.clone();
    let lay = locate(&headers, map, path)?;
    let mut obs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::Data { path: path.into(), row, message: e.to_string() })?;
        let o = parse_row(&rec, &lay, map, log_time).map_err(|message| CliError::Data {
            path: path.into(),
            row,
            message,
        })?;
        obs.push(o);
    }
    if obs.is_empty() {
        return Err(CliError::format(path, "no data rows"));
    }
    Ok(Dataset::new(obs)?)
}

pub fn load_dataset(path: &Path, map: &ColumnMap, log_time: bool) -> CliResult<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_dataset(std::io::BufReader::new(file), path, map, log_time)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Renders observations in the default layout. With `time_scale` the
/// bounds are exponentiated back to event times.
/// `p` and `q` size the header when `obs` is empty.
pub fn render_dataset(obs: &[Observation], p: usize, q: usize, time_scale: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["L".to_string(), "R".into(), "delta".into(), "x".into()];
    header.extend((1..=p).map(|k| format!("z{k}")));
    header.extend((1..=q).map(|k| format!("g{k}")));
    w.write_record(&header).expect("in-memory write");
    for o in obs {
        let (l, r) = o.outcome.bounds();
        let bound = |b: Option<f64>| b.map_or(String::new(), |v| fmt(if time_scale { v.exp() } else { v }));
        let mut rec = vec![bound(l), bound(r), o.delta().code().to_string(), fmt(o.x)];
        rec.extend(o.z.iter().chain(&o.g).map(|&v| fmt(v)));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn save_dataset(path: &Path, data: &Dataset, time_scale: bool) -> CliResult<()> {
    write_atomic(path, render_dataset(data.observations(), data.p(), data.q(), time_scale).as_bytes())
}
