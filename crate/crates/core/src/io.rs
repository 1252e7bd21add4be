//! File formats: numeric time-indexed CSV tables (observations, e-values,
//! p-values), bound and metrics CSV output, discovery-set files, scenario
//! files and the resumable state snapshot.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::closed_testing::{BoundRow, DiscoverySet};
use crate::eprocess::{EProcessFamily, ElementaryState, FamilyKind, PriorSides};
use crate::error::{Error, Result};
use crate::sim::{MetricsTable, ScenarioConfig, SimulationRun};

pub const BOUND_HEADER: &str = "time,set_label,c_inst,c_ard,tdp_inst,tdp_ard";
pub const METRICS_HEADER: &str = "time,pi1,violation_prop,mean_bound,q10,q50,q90";
pub const RAW_HEADER: &str = "iteration,time,set_label,c_inst,c_ard,tdp_reported";

/// A `time,h1,...,hm` table.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub columns: Vec<String>,
    pub times: Vec<u64>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn m(&self) -> usize {
        self.columns.len()
    }
}

pub fn read_table<R: Read>(reader: R) -> Result<NumericTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::input(format!("line 1: {e}")))?.clone();
    if header.get(0) != Some("time") {
        return Err(Error::input("line 1: first column must be named 'time'"));
    }
    if header.len() < 2 {
        return Err(Error::input("line 1: expected at least one hypothesis column"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::input(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::input(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        let time: u64 = record[0]
            .parse()
            .map_err(|_| Error::input(format!("line {line}: bad time value '{}'", &record[0])))?;
        let values = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::input(format!("line {line}: bad numeric value '{f}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(&prev) = times.last() {
            if time != prev + 1 {
                return Err(Error::input(format!(
                    "line {line}: time {time} does not follow {prev}"
                )));
            }
        }
        times.push(time);
        rows.push(values);
    }
    Ok(NumericTable { columns, times, rows })
}

pub fn read_table_file(path: &Path) -> Result<NumericTable> {
    let file = fs::File::open(path)
        .map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
    read_table(file)
}

pub fn write_table<W: Write>(w: &mut W, columns: &[String], times: &[u64], rows: &[Vec<f64>]) -> Result<()> {
    write!(w, "time")?;
    for c in columns {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (t, row) in times.iter().zip(rows) {
        write!(w, "{t}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn default_columns(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("h{i}")).collect()
}

pub fn write_bound_row<W: Write>(w: &mut W, label: &str, row: &BoundRow) -> Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{}",
        row.time, label, row.c_inst, row.c_ard, row.tdp_inst, row.tdp_ard
    )?;
    Ok(())
}

pub fn write_metrics<W: Write>(w: &mut W, table: &MetricsTable) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.time, r.pi1, r.violation_prop, r.mean_bound, r.q10, r.q50, r.q90
        )?;
    }
    Ok(())
}

/// Per-iteration bounds from `burn_in` onward, for external plotting.
pub fn write_raw_bounds<W: Write>(w: &mut W, run: &SimulationRun, burn_in: usize) -> Result<()> {
    writeln!(w, "{RAW_HEADER}")?;
    for (i, series) in run.iterations.iter().enumerate() {
        for (set, s) in run.sets.iter().zip(series) {
            let tdp = s.reported_tdp();
            let first = burn_in.saturating_sub(s.start_time());
            for (k, reported) in tdp.iter().enumerate().skip(first) {
                let row = s.row(k);
                writeln!(w, "{i},{},{},{},{},{reported}", row.time, set.label(), row.c_inst, row.c_ard)?;
            }
        }
    }
    Ok(())
}

/// Parses `label:1,2,5-9` lines; blank lines and `#` comments are skipped.
pub fn parse_sets(text: &str) -> Result<Vec<DiscoverySet>> {
    let mut sets = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, list) = line
            .split_once(':')
            .ok_or_else(|| Error::input(format!("sets line {}: expected 'label:indices'", n + 1)))?;
        let label = label.trim();
        if label.is_empty() || label.contains(',') {
            return Err(Error::input(format!("sets line {}: invalid label '{label}'", n + 1)));
        }
        let indices = parse_index_list(list)
            .map_err(|msg| Error::input(format!("sets line {}: {msg}", n + 1)))?;
        sets.push(DiscoverySet::new(label, indices)?);
    }
    if sets.is_empty() {
        return Err(Error::input("sets file defines no discovery sets"));
    }
    Ok(sets)
}

fn parse_index_list(list: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim) {
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("bad index '{s}'"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (parse(a)?, parse(b)?);
                if a > b {
                    return Err(format!("empty range '{part}'"));
                }
                out.extend(a..=b);
            }
            None => out.push(parse(part)?),
        }
    }
    Ok(out)
}

pub fn read_sets_file(path: &Path) -> Result<Vec<DiscoverySet>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    parse_sets(&text)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    m: Option<usize>,
    n_false: Option<usize>,
    #[serde(rename = "N", alias = "horizon")]
    horizon: Option<usize>,
    mu_alt: Option<f64>,
    rho: Option<f64>,
    alpha: Option<f64>,
    pi1_list: Option<Vec<f64>>,
    r_size: Option<usize>,
    iterations: Option<usize>,
    burn_in: Option<usize>,
    family: Option<FamilyKind>,
    delta: Option<f64>,
    delta_min: Option<f64>,
    quadrature_nodes: Option<usize>,
    prior: Option<PriorSides>,
    ard: Option<bool>,
    seed: Option<u64>,
}

/// Parses a scenario given as a JSON object or as `key = value` lines.
/// Missing keys fall back to [`ScenarioConfig::default`]; unknown keys are errors.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let value = if text.trim_start().starts_with('{') {
        serde_json::from_str::<Value>(text).map_err(|e| Error::config(format!("scenario JSON: {e}")))?
    } else {
        key_value_to_json(text)?
    };
    let file: ScenarioFile =
        serde_json::from_value(value).map_err(|e| Error::config(format!("scenario: {e}")))?;
    let defaults = ScenarioConfig::default();
    let kind = file.family.unwrap_or(defaults.family.kind);
    let family = EProcessFamily {
        kind,
        delta: file.delta.unwrap_or(defaults.family.delta),
        delta_min: file.delta_min.unwrap_or(defaults.family.delta_min),
        quadrature_nodes: file.quadrature_nodes.unwrap_or(defaults.family.quadrature_nodes),
        prior: file.prior.unwrap_or_default(),
    };
    let config = ScenarioConfig {
        m: file.m.unwrap_or(defaults.m),
        n_false: file.n_false.unwrap_or(defaults.n_false),
        horizon: file.horizon.unwrap_or(defaults.horizon),
        mu_alt: file.mu_alt.unwrap_or(defaults.mu_alt),
        rho: file.rho.unwrap_or(defaults.rho),
        alpha: file.alpha.unwrap_or(defaults.alpha),
        pi1_list: file.pi1_list.unwrap_or(defaults.pi1_list),
        r_size: file.r_size.unwrap_or(defaults.r_size),
        iterations: file.iterations.unwrap_or(defaults.iterations),
        burn_in: file.burn_in.unwrap_or(defaults.burn_in),
        family,
        ard: file.ard.unwrap_or(defaults.ard),
        seed: file.seed.unwrap_or(defaults.seed),
    };
    config.validate()?;
    Ok(config)
}

fn key_value_to_json(text: &str) -> Result<Value> {
    let mut map = Map::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("scenario line {}: expected 'key = value'", n + 1)))?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        let bad = |what: &str| Error::config(format!("scenario line {}: {key} expects {what}, got '{value}'", n + 1));
        let json = match key {
            "pi1_list" => Value::Array(
                value
                    .trim_matches(|c| c == '[' || c == ']')
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map(Value::from).map_err(|_| bad("a list of numbers")))
                    .collect::<Result<_>>()?,
            ),
            "family" | "prior" => Value::String(value.to_string()),
            "ard" => Value::Bool(value.parse().map_err(|_| bad("true or false"))?),
            "m" | "n_false" | "N" | "horizon" | "r_size" | "iterations" | "burn_in" | "quadrature_nodes" | "seed" => {
                Value::from(value.parse::<u64>().map_err(|_| bad("a nonnegative integer"))?)
            }
            "mu_alt" | "rho" | "alpha" | "delta" | "delta_min" => {
                Value::from(value.parse::<f64>().map_err(|_| bad("a number"))?)
            }
            other => return Err(Error::config(format!("scenario line {}: unknown key '{other}'", n + 1))),
        };
        if map.insert(key.to_string(), json).is_some() {
            return Err(Error::config(format!("scenario line {}: duplicate key '{key}'", n + 1)));
        }
    }
    Ok(Value::Object(map))
}

pub fn read_scenario_file(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

pub const SNAPSHOT_FORMAT: &str = "anytime-tdp-state";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Observations,
    Evalues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetState {
    pub label: String,
    pub indices: Vec<usize>,
    pub running_min: Option<usize>,
}

/// Everything needed to continue a `bound` run exactly where it stopped.
///
/// Schema (JSON, version 1):
/// `format`, `version`, `mode` (`observations` | `evalues`), `m`, `alpha`,
/// `ard`, `family` (null in e-value mode), `last_time`, `hypotheses`
/// (per-hypothesis `n`, `sum`, `sumsq`, `log_e`, `degenerate`; empty in
/// e-value mode) and `sets` (`label`, `indices`, `running_min`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub mode: InputMode,
    pub m: usize,
    pub alpha: f64,
    pub ard: bool,
    pub family: Option<EProcessFamily>,
    pub last_time: u64,
    pub hypotheses: Vec<ElementaryState>,
    pub sets: Vec<SetState>,
}

impl Snapshot {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Numeric(format!("cannot serialise state: {e}")))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::input(format!("cannot read state {}: {e}", path.display())))?;
        let snap: Snapshot = serde_json::from_str(&text)
            .map_err(|e| Error::input(format!("state {}: {e}", path.display())))?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::input(format!("state {}: not an {SNAPSHOT_FORMAT} file", path.display())));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::config(format!(
                "state {}: version {} is not supported (expected {SNAPSHOT_VERSION})",
                path.display(),
                snap.version
            )));
        }
        Ok(snap)
    }
}
