//! Observational or trial data `(X, A, Y)` and the effect-modifier subvector.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Row-major matrix of points, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("points must have dimension >= 1".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "coordinate buffer of length {} is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    /// One-dimensional points.
    pub fn scalar(values: Vec<f64>) -> Self {
        Self { dim: 1, coords: values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("ragged point rows".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Points {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.row(i));
        }
        Points { dim: self.dim, coords }
    }
}

/// Immutable dataset of `(x_i, a_i, y_i)` rows plus the effect-modifier index set.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    names: Vec<String>,
    x: Points,
    a: Vec<u8>,
    y: Vec<f64>,
    modifiers: Vec<usize>,
}

impl Sample {
    /// Builds a validated sample. `modifiers` are 0-based covariate indices.
    pub fn new(
        names: Vec<String>,
        x: Points,
        a: Vec<u8>,
        y: Vec<f64>,
        modifiers: Vec<usize>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::Validation(format!("need at least 2 rows, got {n}")));
        }
        if a.len() != n || x.len() != n {
            return Err(Error::Validation(format!(
                "length mismatch: y has {n} rows, a has {}, x has {}",
                a.len(),
                x.len()
            )));
        }
        if names.len() != x.dim() {
            return Err(Error::Validation(format!(
                "{} covariate names for {} columns",
                names.len(),
                x.dim()
            )));
        }
        if let Some(i) = a.iter().position(|&v| v > 1) {
            return Err(Error::Validation(format!("treatment at row {} is not 0/1", i + 1)));
        }
        if let Some(i) = y.iter().chain(x.coords.iter()).position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value at flat position {i}")));
        }
        let treated = a.iter().filter(|&&v| v == 1).count();
        if treated == 0 || treated == n {
            return Err(Error::Validation("single treatment arm".into()));
        }
        if modifiers.is_empty() {
            return Err(Error::Validation("effect-modifier set is empty".into()));
        }
        if let Some(&j) = modifiers.iter().find(|&&j| j >= x.dim()) {
            return Err(Error::Validation(format!(
                "effect modifier index {j} out of bounds for {} covariates",
                x.dim()
            )));
        }
        let mut sorted = modifiers.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != modifiers.len() {
            return Err(Error::Validation("duplicate effect modifier".into()));
        }
        Ok(Self { names, x, a, y, modifiers })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.dim()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn x(&self) -> &Points {
        &self.x
    }

    pub fn treatment(&self) -> &[u8] {
        &self.a
    }

    pub fn outcome(&self) -> &[f64] {
        &self.y
    }

    pub fn modifiers(&self) -> &[usize] {
        &self.modifiers
    }

    pub fn modifier_names(&self) -> Vec<String> {
        self.modifiers.iter().map(|&j| self.names[j].clone()).collect()
    }

    /// The effect-modifier subvector `x_s` of every row.
    pub fn modifier_points(&self) -> Points {
        let mut coords = Vec::with_capacity(self.n() * self.modifiers.len());
        for row in self.x.rows() {
            coords.extend(self.modifiers.iter().map(|&j| row[j]));
        }
        Points { dim: self.modifiers.len(), coords }
    }

    /// Same data, different effect modifiers.
    pub fn with_modifiers(&self, modifiers: Vec<usize>) -> Result<Self> {
        Self::new(self.names.clone(), self.x.clone(), self.a.clone(), self.y.clone(), modifiers)
    }

    /// Same covariates and treatment with a replaced outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.names.clone(), self.x.clone(), self.a.clone(), y, self.modifiers.clone())
    }

    /// Resolves covariate names to indices.
    pub fn resolve(&self, columns: &[String]) -> Result<Vec<usize>> {
        resolve_names(&self.names, columns)
    }

    /// Rows `idx`, keeping the same modifiers. Fails if the subset violates
    /// the sample invariants (e.g. a single arm).
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            self.names.clone(),
            self.x.select(idx),
            idx.iter().map(|&i| self.a[i]).collect(),
            idx.iter().map(|&i| self.y[i]).collect(),
            self.modifiers.clone(),
        )
    }
}

fn resolve_names(names: &[String], columns: &[String]) -> Result<Vec<usize>> {
    columns
        .iter()
        .map(|c| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::Validation(format!("unknown column '{c}'")))
        })
        .collect()
}

/// Qualitative threshold `δ >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Delta(f64);

impl Delta {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidArgument(format!("delta must be finite and >= 0, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Delta {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Delta> for f64 {
    fn from(d: Delta) -> f64 {
        d.0
    }
}

/// Column naming convention for CSV ingestion. Every column other than the
/// outcome and treatment columns is a covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub outcome: String,
    pub treatment: String,
    /// Covariate names forming the effect-modifier set `s`.
    pub modifiers: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { outcome: "y".into(), treatment: "a".into(), modifiers: Vec::new() }
    }
}

impl CsvSchema {
    pub fn with_modifiers<S: Into<String>>(modifiers: impl IntoIterator<Item = S>) -> Self {
        Self { modifiers: modifiers.into_iter().map(Into::into).collect(), ..Self::default() }
    }
}

/// Reads a sample from a CSV file with a header row.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Sample> {
    read_csv(File::open(path)?, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("missing column '{name}'")))
    };
    let y_col = find(&schema.outcome)?;
    let a_col = find(&schema.treatment)?;
    let x_cols: Vec<usize> = (0..header.len()).filter(|&c| c != y_col && c != a_col).collect();
    if x_cols.is_empty() {
        return Err(Error::Validation("no covariate columns".into()));
    }
    let names: Vec<String> = x_cols.iter().map(|&c| header[c].clone()).collect();

    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut coords = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).ok_or_else(|| Error::Parse {
                row,
                column: header[c].clone(),
                message: "missing field".into(),
            })?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    column: header[c].clone(),
                    message: format!("'{raw}' is not a finite number"),
                }),
            }
        };
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        y.push(cell(y_col)?);
        let av = cell(a_col)?;
        a.push(match av {
            v if v == 0.0 => 0,
            v if v == 1.0 => 1,
            v => {
                return Err(Error::Validation(format!(
                    "treatment value {v} at row {row} is not in {{0,1}}"
                )))
            }
        });
        for &c in &x_cols {
            coords.push(cell(c)?);
        }
    }
    let modifiers = resolve_names(&names, &schema.modifiers)?;
    let x = Points::new(names.len(), coords)?;
    Sample::new(names, x, a, y, modifiers)
}

/// Writes `y,a,<covariates...>` with shortest round-trip float formatting.
pub fn write_csv<W: Write>(sample: &Sample, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "a".to_string()];
    header.extend(sample.names.iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..sample.n() {
        let mut rec = vec![format!("{}", sample.y[i]), format!("{}", sample.a[i])];
        rec.extend(sample.x.row(i).iter().map(|v| format!("{v}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Train/evaluation split of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

/// Random k-fold partition of the rows of `sample`, deterministic in `seed`.
pub fn split_folds(sample: &Sample, k: usize, seed: u64) -> Result<Vec<Fold>> {
    fold_partition(sample.n(), k, seed)
}

/// Random partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn fold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count must be >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("fold count {k} exceeds row count {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, &[0x666f_6c64]));
    let mut evals: Vec<Vec<usize>> = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, &i) in order.iter().enumerate() {
        evals[pos % k].push(i);
    }
    Ok(evals
        .into_iter()
        .map(|mut eval| {
            eval.sort_unstable();
            let mut in_eval = vec![false; n];
            for &i in &eval {
                in_eval[i] = true;
            }
            let train = (0..n).filter(|&i| !in_eval[i]).collect();
            Fold { train, eval }
        })
        .collect())
}
