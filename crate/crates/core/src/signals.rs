//! Uniformly sampled trajectories and paired trajectory datasets.
//!
//! Two on-disk formats are supported:
//!
//! * CSV, one row per sample. A single-system file has the header
//!   `traj_id,t,x0,...,x{dim-1}`; the combined dataset file produced by
//!   [`save_dataset`] adds a `system` column (`1` or `2`) after `traj_id`. Rows are
//!   sorted by `(traj_id, system, t)` and every `t` must sit on a uniform grid to within
//!   [`GRID_TOLERANCE`].
//! * JSON: `{"grid": {"t0", "dt", "steps"}, "pairs": [{"id", "y1": [[..]], "y2": [[..]]}]}`
//!   with an optional `"input"` vector per pair and an optional top-level `"role"`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Allowed deviation, in seconds, between a stored timestamp and its grid time.
pub const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return Err(Error::invalid(format!("time grid needs finite t0 and dt > 0, got t0={t0}, dt={dt}")));
        }
        if steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(TimeGrid { t0, dt, steps })
    }

    /// Time of sample `k`, computed directly rather than accumulated.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Total duration covered by the left-rectangle rule, `steps * dt`.
    pub fn duration(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Same step count, with `t0` and `dt` equal up to [`GRID_TOLERANCE`].
    pub fn matches(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps
            && (self.t0 - other.t0).abs() <= GRID_TOLERANCE
            && (self.dt - other.dt).abs() * (self.steps.max(1) as f64) <= GRID_TOLERANCE
    }

    fn validate(&self) -> Result<()> {
        TimeGrid::new(self.t0, self.dt, self.steps).map(|_| ())
    }
}

/// A realization `y: T -> R^dim` sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl Signal {
    /// Builds a signal from row-major samples (`steps * dim` values).
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if dim == 0 {
            return Err(Error::InvalidSignal("signal dimension must be at least 1".into()));
        }
        if values.len() != grid.steps * dim {
            return Err(Error::InvalidSignal(format!(
                "expected {} values for {} steps x {} dims, got {}",
                grid.steps * dim,
                grid.steps,
                dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!(
                "non-finite value {} at step {}, dim {}",
                values[pos],
                pos / dim,
                pos % dim
            )));
        }
        Ok(Signal { grid, dim, values })
    }

    pub fn from_rows(grid: TimeGrid, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(k) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::InvalidSignal(format!("row {k} has {} values, expected {dim}", rows[k].len())));
        }
        if rows.len() != grid.steps {
            return Err(Error::GridMismatch {
                trajectory: None,
                detail: format!("{} rows for a grid of {} steps", rows.len(), grid.steps),
            });
        }
        Signal::new(grid, dim, rows.concat())
    }

    /// Scalar signal from a slice of samples.
    pub fn scalar(grid: TimeGrid, values: &[f64]) -> Result<Self> {
        Signal::new(grid, 1, values.to_vec())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.steps
    }

    pub fn is_empty(&self) -> bool {
        self.grid.steps == 0
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.samples().map(<[f64]>::to_vec).collect()
    }

    /// Errors unless `other` lives on the same grid with the same dimension.
    pub fn check_compatible(&self, other: &Signal) -> Result<()> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch {
                trajectory: None,
                detail: format!("{:?} vs {:?}", self.grid, other.grid),
            });
        }
        if self.dim != other.dim {
            return Err(Error::GridMismatch {
                trajectory: None,
                detail: format!("dimension {} vs {}", self.dim, other.dim),
            });
        }
        Ok(())
    }
}

/// Realizations of both systems under one shared input realization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub id: u64,
    pub y1: Signal,
    pub y2: Signal,
    /// The shared input (for the built-in systems, the initial state).
    pub input_tag: Option<Vec<f64>>,
}

impl TrajectoryPair {
    pub fn new(id: u64, y1: Signal, y2: Signal, input_tag: Option<Vec<f64>>) -> Result<Self> {
        y1.check_compatible(&y2).map_err(|e| with_trajectory(e, id))?;
        Ok(TrajectoryPair { id, y1, y2, input_tag })
    }
}

fn with_trajectory(e: Error, id: u64) -> Error {
    match e {
        Error::GridMismatch { detail, .. } => Error::GridMismatch {
            trajectory: Some(id),
            detail,
        },
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Calibration,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pairs: Vec<TrajectoryPair>,
    role: Role,
}

impl Dataset {
    pub fn new(pairs: Vec<TrajectoryPair>, role: Role) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| Error::invalid("a dataset needs at least one trajectory pair"))?;
        let (grid, dim) = (first.y1.grid, first.y1.dim);
        for p in &pairs {
            if !p.y1.grid.matches(&grid) || p.y1.dim != dim {
                return Err(Error::GridMismatch {
                    trajectory: Some(p.id),
                    detail: format!(
                        "expected {} steps x {} dims on {:?}, found {} steps x {} dims",
                        grid.steps, dim, grid, p.y1.grid.steps, p.y1.dim
                    ),
                });
            }
        }
        Ok(Dataset { pairs, role })
    }

    pub fn pairs(&self) -> &[TrajectoryPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.pairs[0].y1.grid
    }

    pub fn dim(&self) -> usize {
        self.pairs[0].y1.dim
    }

    /// All signals of both systems, pair by pair.
    pub fn signals(&self) -> impl Iterator<Item = &Signal> + '_ {
        self.pairs.iter().flat_map(|p| [&p.y1, &p.y2])
    }

    pub fn into_pairs(self) -> Vec<TrajectoryPair> {
        self.pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

/// Shuffled split into `(calibration, test)` with `n_cal` calibration pairs.
pub fn split_dataset(d: &Dataset, n_cal: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_cal == 0 || n_cal >= d.len() {
        return Err(Error::invalid(format!(
            "n_cal must satisfy 1 <= n_cal < {} (dataset size), got {n_cal}",
            d.len()
        )));
    }
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.shuffle(&mut crate::rng::stream(seed, u64::MAX));
    let pick = |ix: &[usize]| ix.iter().map(|&i| d.pairs[i].clone()).collect::<Vec<_>>();
    let cal = Dataset::new(pick(&idx[..n_cal]), Role::Calibration)?;
    let test = Dataset::new(pick(&idx[n_cal..]), Role::Test)?;
    Ok((cal, test))
}

pub fn load_dataset(path: impl AsRef<Path>, format: Format) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Json => parse_json(path, &text),
        Format::Csv => parse_combined_csv(path, &text),
    }
}

/// Loads one single-system CSV file per system and pairs trajectories by `traj_id`.
pub fn load_dataset_pair(y1_path: impl AsRef<Path>, y2_path: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| -> Result<BTreeMap<u64, Signal>> {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let per_system = parse_csv_rows(p, &text, false)?;
        Ok(per_system.into_iter().map(|((id, _), s)| (id, s)).collect())
    };
    let (p1, p2) = (y1_path.as_ref(), y2_path.as_ref());
    let mut s1 = read(p1)?;
    let mut s2 = read(p2)?;
    let mut pairs = Vec::with_capacity(s1.len());
    for (id, y1) in std::mem::take(&mut s1) {
        let y2 = s2.remove(&id).ok_or_else(|| Error::GridMismatch {
            trajectory: Some(id),
            detail: format!("present in {} but missing from {}", p1.display(), p2.display()),
        })?;
        pairs.push(TrajectoryPair::new(id, y1, y2, None)?);
    }
    if let Some(id) = s2.keys().next() {
        return Err(Error::GridMismatch {
            trajectory: Some(*id),
            detail: format!("present in {} but missing from {}", p2.display(), p1.display()),
        });
    }
    Dataset::new(pairs, Role::Calibration)
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let body = match format {
        Format::Json => to_json(d),
        Format::Csv => to_combined_csv(d),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDataset {
    grid: TimeGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role: Option<Role>,
    pairs: Vec<JsonPair>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonPair {
    id: u64,
    y1: Vec<Vec<f64>>,
    y2: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input: Option<Vec<f64>>,
}

fn parse_json(path: &Path, text: &str) -> Result<Dataset> {
    let raw: JsonDataset = serde_json::from_str(text).map_err(|e| Error::DataParse {
        path: path.to_path_buf(),
        locus: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    raw.grid.validate()?;
    let pairs = raw
        .pairs
        .into_iter()
        .map(|p| {
            let y1 = Signal::from_rows(raw.grid, &p.y1).map_err(|e| with_trajectory(e, p.id))?;
            let y2 = Signal::from_rows(raw.grid, &p.y2).map_err(|e| with_trajectory(e, p.id))?;
            TrajectoryPair::new(p.id, y1, y2, p.input)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(pairs, raw.role.unwrap_or_default())
}

fn to_json(d: &Dataset) -> String {
    let raw = JsonDataset {
        grid: *d.grid(),
        role: Some(d.role),
        pairs: d
            .pairs
            .iter()
            .map(|p| JsonPair {
                id: p.id,
                y1: p.y1.rows(),
                y2: p.y2.rows(),
                input: p.input_tag.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&raw).expect("dataset serialization cannot fail")
}

// ---------------------------------------------------------------------------
// CSV

struct Rows {
    first_line: u64,
    times: Vec<f64>,
    values: Vec<f64>,
}

/// Parses rows into signals keyed by `(traj_id, system)`; `system` is 0 when the file
/// has no system column.
fn parse_csv_rows(path: &Path, text: &str, with_system: bool) -> Result<BTreeMap<(u64, u8), Signal>> {
    let parse_err = |line: u64, message: String| Error::DataParse {
        path: path.to_path_buf(),
        locus: format!("line {line}"),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let fixed: &[&str] = if with_system { &["traj_id", "system", "t"] } else { &["traj_id", "t"] };
    let names: Vec<&str> = header.iter().collect();
    if names.len() <= fixed.len() || names[..fixed.len()] != *fixed {
        return Err(parse_err(1, format!("expected header starting with {}, got {}", fixed.join(","), names.join(","))));
    }
    let dim = names.len() - fixed.len();
    for (i, name) in names[fixed.len()..].iter().enumerate() {
        if *name != format!("x{i}") {
            return Err(parse_err(1, format!("expected column x{i}, got {name}")));
        }
    }

    let mut groups: BTreeMap<(u64, u8), Rows> = BTreeMap::new();
    let mut last_key: Option<(u64, u8)> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let id: u64 = field(0)
            .parse()
            .map_err(|_| parse_err(line, format!("bad traj_id {:?}", field(0))))?;
        let system: u8 = if with_system {
            match field(1) {
                "1" => 1,
                "2" => 2,
                other => return Err(parse_err(line, format!("system must be 1 or 2, got {other:?}"))),
            }
        } else {
            0
        };
        let off = fixed.len();
        let t: f64 = field(off - 1)
            .parse()
            .map_err(|_| parse_err(line, format!("bad time {:?}", field(off - 1))))?;
        let key = (id, system);
        if let Some(prev) = last_key {
            if key < prev {
                return Err(parse_err(line, "rows must be sorted by (traj_id, system, t)".into()));
            }
        }
        last_key = Some(key);
        let rows = groups.entry(key).or_insert_with(|| Rows {
            first_line: line,
            times: Vec::new(),
            values: Vec::new(),
        });
        if let Some(&prev_t) = rows.times.last() {
            if t <= prev_t {
                return Err(parse_err(line, format!("time {t} does not increase past {prev_t}")));
            }
        }
        rows.times.push(t);
        for j in 0..dim {
            let s = field(off + j);
            let v: f64 = s.parse().map_err(|_| parse_err(line, format!("bad value {s:?} in x{j}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value in x{j}")));
            }
            rows.values.push(v);
        }
    }

    groups
        .into_iter()
        .map(|(key, rows)| {
            let grid = infer_grid(&rows.times).map_err(|msg| Error::GridMismatch {
                trajectory: Some(key.0),
                detail: format!("{} (rows from line {})", msg, rows.first_line),
            })?;
            Ok((key, Signal::new(grid, dim, rows.values)?))
        })
        .collect()
}

fn infer_grid(times: &[f64]) -> std::result::Result<TimeGrid, String> {
    let steps = times.len();
    let t0 = times[0];
    let dt = if steps > 1 { (times[steps - 1] - t0) / (steps - 1) as f64 } else { 1.0 };
    let grid = TimeGrid::new(t0, dt, steps).map_err(|e| e.to_string())?;
    for (k, &t) in times.iter().enumerate() {
        if (t - grid.time(k)).abs() > GRID_TOLERANCE {
            return Err(format!("non-uniform time grid: sample {k} at t={t}, expected {}", grid.time(k)));
        }
    }
    Ok(grid)
}

fn parse_combined_csv(path: &Path, text: &str) -> Result<Dataset> {
    let mut signals = parse_csv_rows(path, text, true)?;
    let ids: Vec<u64> = signals.keys().map(|k| k.0).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut pairs = Vec::with_capacity(ids.len());
    for id in ids {
        let missing = |sys: u8| Error::GridMismatch {
            trajectory: Some(id),
            detail: format!("no rows for system {sys}"),
        };
        let y1 = signals.remove(&(id, 1)).ok_or_else(|| missing(1))?;
        let y2 = signals.remove(&(id, 2)).ok_or_else(|| missing(2))?;
        pairs.push(TrajectoryPair::new(id, y1, y2, None)?);
    }
    Dataset::new(pairs, Role::Calibration)
}

fn csv_header(dim: usize, with_system: bool) -> String {
    let mut h = String::from(if with_system { "traj_id,system,t" } else { "traj_id,t" });
    for j in 0..dim {
        h.push_str(&format!(",x{j}"));
    }
    h.push('\n');
    h
}

fn push_signal_rows(out: &mut String, id: u64, system: Option<u8>, s: &Signal) {
    use std::fmt::Write;
    for (k, row) in s.samples().enumerate() {
        write!(out, "{id}").unwrap();
        if let Some(sys) = system {
            write!(out, ",{sys}").unwrap();
        }
        write!(out, ",{}", s.grid.time(k)).unwrap();
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
}

fn to_combined_csv(d: &Dataset) -> String {
    let mut out = csv_header(d.dim(), true);
    let mut pairs: Vec<&TrajectoryPair> = d.pairs.iter().collect();
    pairs.sort_by_key(|p| p.id);
    for p in pairs {
        push_signal_rows(&mut out, p.id, Some(1), &p.y1);
        push_signal_rows(&mut out, p.id, Some(2), &p.y2);
    }
    out
}

/// Writes the single-system CSV (`traj_id,t,x0,...`) for system 1 or 2.
pub fn save_system_csv(d: &Dataset, system: u8, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = csv_header(d.dim(), false);
    let mut pairs: Vec<&TrajectoryPair> = d.pairs.iter().collect();
    pairs.sort_by_key(|p| p.id);
    for p in pairs {
        let s = if system == 1 { &p.y1 } else { &p.y2 };
        push_signal_rows(&mut out, p.id, None, s);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
