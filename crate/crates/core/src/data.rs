//! Datasets with missing responses and distributional covariates.
//!
//! A [`Dataset`] holds fully observed covariates split into three blocks
//! (numeric, categorical, distributional), a response vector and the
//! observation mask `R`. Distributional covariates are quantile functions
//! on a grid shared by every record, so that Wasserstein-2 distances reduce
//! to an L2 distance between value vectors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Grid size used for glucodensities when none is configured.
pub const DEFAULT_GRID_SIZE: usize = 100;

/// Tokens read as a missing value unless the schema overrides them.
pub fn default_na_tokens() -> Vec<String> {
    vec![String::new(), "NA".to_string()]
}

/// A discretized quantile function: monotone values on a probability grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantileFunction")]
pub struct QuantileFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawQuantileFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawQuantileFunction> for QuantileFunction {
    type Error = Error;

    fn try_from(raw: RawQuantileFunction) -> Result<Self> {
        QuantileFunction::new(raw.grid, raw.values)
    }
}

impl QuantileFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "quantile grid has {} points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::InvalidArgument(
                "a quantile function needs at least 2 grid points".into(),
            ));
        }
        if grid.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidArgument(
                "quantile grid must lie strictly inside (0, 1)".into(),
            ));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "quantile grid must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("quantile values must be finite".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(
                "quantile values must be non-decreasing".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    /// Builds a quantile function on the default midpoint grid of `values.len()` points.
    pub fn on_uniform_grid(values: Vec<f64>) -> Result<Self> {
        let grid = uniform_grid(values.len());
        Self::new(grid, values)
    }

    /// Empirical quantile function of a sample, evaluated on the midpoint grid
    /// `p_k = (k - 1/2)/m`.
    ///
    /// The k-th order statistic of a sample of size N sits at probability
    /// `(k - 1/2)/N` and the curve is linear in between, constant beyond the
    /// extreme order statistics. A sample of exactly `m` points therefore maps
    /// to its own order statistics.
    pub fn from_sample(sample: &[f64], m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument("grid size must be at least 2".into()));
        }
        let mut sorted: Vec<f64> = sample.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.len() < m {
            return Err(Error::Insufficient(format!(
                "{} finite readings, need at least {m}",
                sorted.len()
            )));
        }
        sorted.sort_by(f64::total_cmp);
        let size = sorted.len() as f64;
        let grid = uniform_grid(m);
        let mut values = Vec::with_capacity(m);
        for &p in &grid {
            // 0-based fractional position of p among the plotting positions.
            let h = p * size - 0.5;
            let v = if h <= 0.0 {
                sorted[0]
            } else if h >= size - 1.0 {
                sorted[sorted.len() - 1]
            } else {
                let lo = h.floor() as usize;
                let frac = h - lo as f64;
                sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
            };
            values.push(v);
        }
        for k in 1..values.len() {
            if values[k] < values[k - 1] {
                values[k] = values[k - 1];
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mean of the quantile values (the distribution mean on a uniform grid).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Standard deviation of the quantile values.
    pub fn sd(&self) -> f64 {
        let mean = self.mean();
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / self.values.len() as f64;
        var.sqrt()
    }

    /// Squared Wasserstein-2 distance, `Σ_k (Q(p_k) - Q'(p_k))² / m`.
    ///
    /// Both functions must live on the same grid.
    pub fn squared_distance(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::SchemaMismatch(
                "quantile functions are defined on different grids".into(),
            ));
        }
        Ok(squared_l2(&self.values, &other.values) / self.values.len() as f64)
    }
}

fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Midpoint probability grid `(k - 1/2)/m`, `k = 1..m`.
pub fn uniform_grid(m: usize) -> Vec<f64> {
    (1..=m).map(|k| (k as f64 - 0.5) / m as f64).collect()
}

/// One continuous glucose monitor reading. The timestamp is kept verbatim;
/// it plays no role in the marginal (time-occupancy) representation.
#[derive(Debug, Clone, PartialEq)]
pub struct CgmReading {
    pub timestamp: String,
    pub glucose: f64,
}

/// Converts a CGM stream into its glucodensity quantile function on `m` points.
pub fn cgm_to_quantile(readings: &[CgmReading], m: usize) -> Result<QuantileFunction> {
    let sample: Vec<f64> = readings.iter().map(|r| r.glucose).collect();
    QuantileFunction::from_sample(&sample, m)
}

/// Reads a long-format CGM file (`subject_id,timestamp,glucose`) grouped by subject.
pub fn read_cgm_csv(path: &Path, na_tokens: &[String]) -> Result<BTreeMap<String, Vec<CgmReading>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let position = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Schema(format!("CGM file {} lacks column `{name}`", path.display()))
        })
    };
    let (sid, ts, glu) = (position("subject_id")?, position("timestamp")?, position("glucose")?);
    let mut out: BTreeMap<String, Vec<CgmReading>> = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let token = record.get(glu).unwrap_or("").trim();
        let glucose = if na_tokens.iter().any(|t| t == token) {
            f64::NAN
        } else {
            token.parse::<f64>().map_err(|_| Error::Parse {
                row: row + 1,
                column: "glucose".into(),
                message: format!("`{token}` is not a number"),
            })?
        };
        out.entry(record.get(sid).unwrap_or("").to_string())
            .or_default()
            .push(CgmReading {
                timestamp: record.get(ts).unwrap_or("").to_string(),
                glucose,
            });
    }
    Ok(out)
}

/// Fully observed covariates, one row per record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    n: usize,
    numeric_names: Vec<String>,
    /// Row-major `n × p_num`.
    numeric: Vec<f64>,
    categorical_names: Vec<String>,
    cardinalities: Vec<u32>,
    /// Row-major `n × p_cat`.
    categorical: Vec<u32>,
    /// Empty when the block is absent, otherwise one entry per record.
    distributional: Vec<Option<QuantileFunction>>,
}

impl Covariates {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            numeric_names: Vec::new(),
            numeric: Vec::new(),
            categorical_names: Vec::new(),
            cardinalities: Vec::new(),
            categorical: Vec::new(),
            distributional: Vec::new(),
        }
    }

    /// Covariates made of numeric columns only.
    pub fn from_numeric_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        let mut cov = Self::empty(n);
        for (name, column) in names.into_iter().zip(columns) {
            cov.push_numeric(name, column)?;
        }
        Ok(cov)
    }

    pub fn push_numeric(&mut self, name: String, column: &[f64]) -> Result<()> {
        if column.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "numeric column `{name}` has {} rows, expected {}",
                column.len(),
                self.n
            )));
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "numeric column `{name}` has non-finite values"
            )));
        }
        let p = self.numeric_names.len();
        let mut merged = Vec::with_capacity(self.n * (p + 1));
        for (i, v) in column.iter().enumerate() {
            merged.extend_from_slice(&self.numeric[i * p..(i + 1) * p]);
            merged.push(*v);
        }
        self.numeric = merged;
        self.numeric_names.push(name);
        Ok(())
    }

    pub fn push_categorical(&mut self, name: String, codes: &[u32], cardinality: u32) -> Result<()> {
        if codes.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "categorical column `{name}` has {} rows, expected {}",
                codes.len(),
                self.n
            )));
        }
        if let Some(bad) = codes.iter().find(|&&c| c >= cardinality) {
            return Err(Error::InvalidArgument(format!(
                "categorical column `{name}` has code {bad} outside cardinality {cardinality}"
            )));
        }
        let p = self.categorical_names.len();
        let mut merged = Vec::with_capacity(self.n * (p + 1));
        for (i, c) in codes.iter().enumerate() {
            merged.extend_from_slice(&self.categorical[i * p..(i + 1) * p]);
            merged.push(*c);
        }
        self.categorical = merged;
        self.categorical_names.push(name);
        self.cardinalities.push(cardinality);
        Ok(())
    }

    /// Attaches the distributional block. Every present quantile function must
    /// share the same grid.
    pub fn set_distributional(&mut self, block: Vec<Option<QuantileFunction>>) -> Result<()> {
        if block.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "distributional block has {} rows, expected {}",
                block.len(),
                self.n
            )));
        }
        let mut grids = block.iter().flatten().map(QuantileFunction::grid);
        if let Some(first) = grids.next() {
            if grids.any(|g| g != first) {
                return Err(Error::SchemaMismatch(
                    "quantile functions must share one grid".into(),
                ));
            }
            self.distributional = block;
        } else {
            self.distributional = Vec::new();
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_numeric(&self) -> usize {
        self.numeric_names.len()
    }

    pub fn p_categorical(&self) -> usize {
        self.categorical_names.len()
    }

    pub fn numeric_names(&self) -> &[String] {
        &self.numeric_names
    }

    pub fn categorical_names(&self) -> &[String] {
        &self.categorical_names
    }

    pub fn cardinalities(&self) -> &[u32] {
        &self.cardinalities
    }

    pub fn numeric_row(&self, i: usize) -> &[f64] {
        let p = self.p_numeric();
        &self.numeric[i * p..(i + 1) * p]
    }

    pub fn numeric_column(&self, l: usize) -> Vec<f64> {
        let p = self.p_numeric();
        (0..self.n).map(|i| self.numeric[i * p + l]).collect()
    }

    pub fn categorical_row(&self, i: usize) -> &[u32] {
        let p = self.p_categorical();
        &self.categorical[i * p..(i + 1) * p]
    }

    pub fn categorical_column(&self, l: usize) -> Vec<u32> {
        let p = self.p_categorical();
        (0..self.n).map(|i| self.categorical[i * p + l]).collect()
    }

    /// True when at least one record carries a quantile function.
    pub fn has_distributional(&self) -> bool {
        !self.distributional.is_empty()
    }

    pub fn quantile(&self, i: usize) -> Option<&QuantileFunction> {
        self.distributional.get(i).and_then(Option::as_ref)
    }

    pub fn distributional(&self) -> &[Option<QuantileFunction>] {
        &self.distributional
    }

    /// Shared grid of the distributional block, if any.
    pub fn grid(&self) -> Option<&[f64]> {
        self.distributional.iter().flatten().next().map(QuantileFunction::grid)
    }

    /// Rows at `indices`, in order; repeated indices are allowed.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let (pn, pc) = (self.p_numeric(), self.p_categorical());
        let mut numeric = Vec::with_capacity(indices.len() * pn);
        let mut categorical = Vec::with_capacity(indices.len() * pc);
        for &i in indices {
            numeric.extend_from_slice(self.numeric_row(i));
            categorical.extend_from_slice(self.categorical_row(i));
        }
        let distributional = if self.has_distributional() {
            indices.iter().map(|&i| self.distributional[i].clone()).collect()
        } else {
            Vec::new()
        };
        Self {
            n: indices.len(),
            numeric_names: self.numeric_names.clone(),
            numeric,
            categorical_names: self.categorical_names.clone(),
            cardinalities: self.cardinalities.clone(),
            categorical,
            distributional,
        }
    }

    /// Keeps only the named numeric and categorical columns, and the
    /// distributional block when `distributional` is set.
    pub fn select(&self, numeric: &[&str], categorical: &[&str], distributional: bool) -> Result<Self> {
        let mut out = Self::empty(self.n);
        for name in numeric {
            let l = self
                .numeric_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::SchemaMismatch(format!("no numeric column `{name}`")))?;
            out.push_numeric(name.to_string(), &self.numeric_column(l))?;
        }
        for name in categorical {
            let l = self
                .categorical_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::SchemaMismatch(format!("no categorical column `{name}`")))?;
            out.push_categorical(name.to_string(), &self.categorical_column(l), self.cardinalities[l])?;
        }
        if distributional {
            if !self.has_distributional() {
                return Err(Error::SchemaMismatch("no distributional block".into()));
            }
            out.distributional = self.distributional.clone();
        }
        Ok(out)
    }

    /// Covariates without the distributional block.
    pub fn without_distributional(&self) -> Self {
        let mut out = self.clone();
        out.distributional = Vec::new();
        out
    }

    /// Checks that `other` has the same columns, cardinalities and grid.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.numeric_names != other.numeric_names {
            return Err(Error::SchemaMismatch(format!(
                "numeric columns {:?} vs {:?}",
                self.numeric_names, other.numeric_names
            )));
        }
        if self.categorical_names != other.categorical_names || self.cardinalities != other.cardinalities {
            return Err(Error::SchemaMismatch(format!(
                "categorical columns {:?} vs {:?}",
                self.categorical_names, other.categorical_names
            )));
        }
        if self.has_distributional() != other.has_distributional() || self.grid() != other.grid() {
            return Err(Error::SchemaMismatch("distributional blocks differ".into()));
        }
        Ok(())
    }

    fn hash_into(&self, hasher: &mut Sha256) {
        for v in &self.numeric {
            hasher.update(v.to_le_bytes());
        }
        for c in &self.categorical {
            hasher.update(c.to_le_bytes());
        }
        for q in &self.distributional {
            match q {
                Some(q) => q.values().iter().for_each(|v| hasher.update(v.to_le_bytes())),
                None => hasher.update([0xff]),
            }
        }
    }
}

/// Mean and standard deviation used to standardize one numeric column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Standardization constants of every retained numeric column, in column order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<ColumnScale>,
}

impl Standardization {
    pub fn column(&self, name: &str) -> Option<&ColumnScale> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn transform(&self, name: &str, raw: f64) -> Option<f64> {
        self.column(name).map(|c| (raw - c.mean) / c.sd)
    }

    pub fn inverse(&self, name: &str, standardized: f64) -> Option<f64> {
        self.column(name).map(|c| standardized * c.sd + c.mean)
    }
}

/// Everything needed to encode new records the way a training set was encoded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub standardization: Standardization,
    /// Level labels per categorical column, indexed by code.
    pub category_levels: BTreeMap<String, Vec<String>>,
    /// Names of columns dropped for zero variance.
    #[serde(default)]
    pub dropped: Vec<String>,
}

/// A categorical column before encoding: labels per record.
#[derive(Debug, Clone)]
pub struct RawCategorical {
    pub name: String,
    pub labels: Vec<String>,
}

/// Mixed covariates, response and observation mask.
#[derive(Debug, Clone)]
pub struct Dataset {
    ids: Vec<String>,
    covariates: Covariates,
    response_name: String,
    /// NaN where unobserved.
    response: Vec<f64>,
    mask: Vec<bool>,
    encoding: Encoding,
    warnings: Vec<String>,
}

/// Responses of unobserved records are placeholders and do not take part
/// in equality.
impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
            && self.covariates == other.covariates
            && self.response_name == other.response_name
            && self.mask == other.mask
            && self.encoding == other.encoding
            && self.warnings == other.warnings
            && self
                .response
                .iter()
                .zip(&other.response)
                .zip(&self.mask)
                .all(|((a, b), &m)| !m || a == b)
    }
}

impl Dataset {
    /// Assembles a dataset from encoded covariates and an optional response per record.
    pub fn new(ids: Vec<String>, covariates: Covariates, response: Vec<Option<f64>>) -> Result<Self> {
        let n = covariates.n();
        if ids.len() != n || response.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} ids and {} responses for {n} covariate rows",
                ids.len(),
                response.len()
            )));
        }
        if let Some(i) = response.iter().position(|r| matches!(r, Some(v) if !v.is_finite())) {
            return Err(Error::InvalidArgument(format!("response of record {i} is not finite")));
        }
        let mask = response.iter().map(Option::is_some).collect();
        let response = response.into_iter().map(|r| r.unwrap_or(f64::NAN)).collect();
        Ok(Self {
            ids,
            covariates,
            response_name: "y".into(),
            response,
            mask,
            encoding: Encoding::default(),
            warnings: Vec::new(),
        })
    }

    /// Builds a dataset from raw columns, standardizing numeric columns over all
    /// rows (or with `reference` constants when given) and coding categorical
    /// labels. Zero-variance numeric columns are dropped with a warning.
    pub fn from_raw(
        ids: Vec<String>,
        numeric: Vec<(String, Vec<f64>)>,
        categorical: Vec<RawCategorical>,
        distributional: Option<Vec<Option<QuantileFunction>>>,
        response_name: &str,
        response: Vec<Option<f64>>,
        reference: Option<&Encoding>,
    ) -> Result<Self> {
        let n = ids.len();
        let (covariates, encoding, warnings) = encode_covariates(n, numeric, categorical, distributional, reference)?;
        let mut ds = Self::new(ids, covariates, response)?;
        ds.response_name = response_name.to_string();
        ds.encoding = encoding;
        ds.warnings = warnings;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.covariates.n()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Response of record `i`; an error when it is not observed.
    pub fn response(&self, i: usize) -> Result<f64> {
        if self.mask[i] {
            Ok(self.response[i])
        } else {
            Err(Error::Unobserved(i))
        }
    }

    /// Responses with `fill` substituted for unobserved records.
    pub fn response_or(&self, fill: f64) -> Vec<f64> {
        self.response
            .iter()
            .zip(&self.mask)
            .map(|(&y, &m)| if m { y } else { fill })
            .collect()
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.mask[i]).collect()
    }

    pub fn encoding(&self) -> &Encoding {
        &self.encoding
    }

    pub fn standardization(&self) -> &Standardization {
        &self.encoding.standardization
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Raw (destandardized) value of numeric column `l` for record `i`.
    pub fn raw_numeric(&self, i: usize, l: usize) -> f64 {
        let name = &self.covariates.numeric_names()[l];
        let z = self.covariates.numeric_row(i)[l];
        self.encoding.standardization.inverse(name, z).unwrap_or(z)
    }

    /// Records at `indices` (repeats allowed), sharing this dataset's encoding.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            covariates: self.covariates.subset(indices),
            response_name: self.response_name.clone(),
            response: indices.iter().map(|&i| self.response[i]).collect(),
            mask: indices.iter().map(|&i| self.mask[i]).collect(),
            encoding: self.encoding.clone(),
            warnings: Vec::new(),
        }
    }

    /// Same records with replaced covariates (row count must match).
    pub fn with_covariates(&self, covariates: Covariates) -> Result<Self> {
        if covariates.n() != self.n() {
            return Err(Error::InvalidArgument("covariate row count changed".into()));
        }
        let mut out = self.clone();
        out.covariates = covariates;
        Ok(out)
    }

    /// Same records with a new observation mask; responses of records that
    /// become unobserved are discarded.
    pub fn with_mask(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.n() {
            return Err(Error::InvalidArgument("mask length differs from n".into()));
        }
        if let Some(i) = (0..self.n()).find(|&i| mask[i] && !self.mask[i]) {
            return Err(Error::Unobserved(i));
        }
        let mut out = self.clone();
        out.mask = mask.to_vec();
        for i in 0..self.n() {
            if !mask[i] {
                out.response[i] = f64::NAN;
            }
        }
        Ok(out)
    }

    /// SHA-256 over covariates, mask and observed responses.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        self.covariates.hash_into(&mut hasher);
        for (y, m) in self.response.iter().zip(&self.mask) {
            hasher.update([*m as u8]);
            if *m {
                hasher.update(y.to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

type Encoded = (Covariates, Encoding, Vec<String>);

fn encode_covariates(
    n: usize,
    numeric: Vec<(String, Vec<f64>)>,
    categorical: Vec<RawCategorical>,
    distributional: Option<Vec<Option<QuantileFunction>>>,
    reference: Option<&Encoding>,
) -> Result<Encoded> {
    let mut cov = Covariates::empty(n);
    let mut encoding = Encoding::default();
    let mut warnings = Vec::new();
    for (name, column) in numeric {
        let scale = match reference {
            Some(r) => {
                if r.dropped.contains(&name) {
                    continue;
                }
                r.standardization.column(&name).cloned().ok_or_else(|| {
                    Error::SchemaMismatch(format!("numeric column `{name}` unknown to the reference encoding"))
                })?
            }
            None => {
                let mean = column.iter().sum::<f64>() / n as f64;
                let var = if n > 1 {
                    column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
                } else {
                    0.0
                };
                let sd = var.sqrt();
                if !(sd > 1e-12 * mean.abs().max(1.0)) {
                    warnings.push(format!("numeric column `{name}` has zero variance and was dropped"));
                    encoding.dropped.push(name);
                    continue;
                }
                ColumnScale { name: name.clone(), mean, sd }
            }
        };
        let standardized: Vec<f64> = column.iter().map(|v| (v - scale.mean) / scale.sd).collect();
        cov.push_numeric(name, &standardized)?;
        encoding.standardization.columns.push(scale);
    }
    for raw in categorical {
        let levels: Vec<String> = match reference {
            Some(r) => r.category_levels.get(&raw.name).cloned().ok_or_else(|| {
                Error::SchemaMismatch(format!("categorical column `{}` unknown to the reference encoding", raw.name))
            })?,
            None => raw.labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
        };
        let codes = raw
            .labels
            .iter()
            .enumerate()
            .map(|(row, label)| {
                levels.iter().position(|l| l == label).map(|c| c as u32).ok_or_else(|| Error::Parse {
                    row: row + 1,
                    column: raw.name.clone(),
                    message: format!("unknown level `{label}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        cov.push_categorical(raw.name.clone(), &codes, levels.len() as u32)?;
        encoding.category_levels.insert(raw.name, levels);
    }
    if let Some(block) = distributional {
        cov.set_distributional(block)?;
    }
    if let Some(r) = reference {
        encoding.dropped = r.dropped.clone();
    }
    Ok((cov, encoding, warnings))
}

/// Role of a CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Numeric,
    Categorical,
    Response,
    Id,
}

/// Location of a long-format CGM file and the grid size for its glucodensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgmSource {
    pub path: PathBuf,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

/// Column-role configuration for [`load_dataset`].
///
/// `quantiles` names a wide CSV (`id,q1,...,qm`) of precomputed quantile
/// functions on the midpoint grid; `cgm` names a long-format CGM file. Both
/// are joined on the id column. Relative paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: BTreeMap<String, ColumnRole>,
    #[serde(default = "default_na_tokens")]
    pub na_tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cgm: Option<CgmSource>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Schema {
    pub fn new(columns: BTreeMap<String, ColumnRole>) -> Self {
        Self {
            columns,
            na_tokens: default_na_tokens(),
            quantiles: None,
            cgm: None,
            base_dir: None,
        }
    }

    /// Reads a JSON schema; relative side-file paths resolve against its directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut schema: Schema = serde_json::from_str(&text)?;
        schema.base_dir = path.parent().map(Path::to_path_buf);
        Ok(schema)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn is_na(&self, token: &str) -> bool {
        self.na_tokens.iter().any(|t| t == token)
    }
}

/// Loads a tabular dataset, standardizing numeric columns over all rows.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    load_table(path, schema, None, true)
}

/// Loads records encoded with the constants of an earlier dataset. The
/// response column may be absent, in which case every response is unobserved.
pub fn load_dataset_with(path: &Path, schema: &Schema, reference: &Encoding) -> Result<Dataset> {
    load_table(path, schema, Some(reference), false)
}

fn load_table(path: &Path, schema: &Schema, reference: Option<&Encoding>, require_response: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    for name in schema.columns.keys() {
        let role = schema.columns[name];
        let present = headers.iter().any(|h| h == name);
        if !present && !(role == ColumnRole::Response && !require_response) {
            return Err(Error::Schema(format!("column `{name}` not found in {}", path.display())));
        }
    }
    let responses: Vec<&String> = schema.columns.iter().filter(|(_, r)| **r == ColumnRole::Response).map(|(k, _)| k).collect();
    if responses.len() != 1 {
        return Err(Error::Schema(format!(
            "schema must assign exactly one response column, found {}",
            responses.len()
        )));
    }
    let response_name = responses[0].clone();
    if schema.columns.values().filter(|r| **r == ColumnRole::Id).count() > 1 {
        return Err(Error::Schema("at most one id column is allowed".into()));
    }

    // Columns in header order.
    let roles: Vec<(usize, String, ColumnRole)> = headers
        .iter()
        .enumerate()
        .filter_map(|(k, h)| schema.columns.get(h).map(|r| (k, h.to_string(), *r)))
        .collect();

    let mut ids = Vec::new();
    let mut numeric: Vec<(String, Vec<f64>)> = roles
        .iter()
        .filter(|(_, _, r)| *r == ColumnRole::Numeric)
        .map(|(_, name, _)| (name.clone(), Vec::new()))
        .collect();
    let mut categorical: Vec<RawCategorical> = roles
        .iter()
        .filter(|(_, _, r)| *r == ColumnRole::Categorical)
        .map(|(_, name, _)| RawCategorical { name: name.clone(), labels: Vec::new() })
        .collect();
    let mut response = Vec::new();

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 1;
        let (mut num_k, mut cat_k) = (0, 0);
        let mut id = None;
        let mut y = None;
        for (k, name, role) in &roles {
            let token = record.get(*k).unwrap_or("").trim();
            match role {
                ColumnRole::Id => id = Some(token.to_string()),
                ColumnRole::Numeric => {
                    if schema.is_na(token) {
                        return Err(Error::Parse {
                            row: line,
                            column: name.clone(),
                            message: "missing covariate values are not supported".into(),
                        });
                    }
                    let v = token.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                        row: line,
                        column: name.clone(),
                        message: format!("`{token}` is not a finite number"),
                    })?;
                    numeric[num_k].1.push(v);
                    num_k += 1;
                }
                ColumnRole::Categorical => {
                    if schema.is_na(token) {
                        return Err(Error::Parse {
                            row: line,
                            column: name.clone(),
                            message: "missing covariate values are not supported".into(),
                        });
                    }
                    categorical[cat_k].labels.push(token.to_string());
                    cat_k += 1;
                }
                ColumnRole::Response => {
                    if !schema.is_na(token) {
                        let v = token.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                            row: line,
                            column: name.clone(),
                            message: format!("`{token}` is not a finite number"),
                        })?;
                        y = Some(v);
                    }
                }
            }
        }
        ids.push(id.unwrap_or_else(|| line.to_string()));
        response.push(y);
    }
    let n = ids.len();
    if n == 0 {
        return Err(Error::Insufficient(format!("{} has no records", path.display())));
    }

    let distributional = load_distributional(schema, &ids)?;
    Dataset::from_raw(ids, numeric, categorical, distributional, &response_name, response, reference)
}

fn load_distributional(schema: &Schema, ids: &[String]) -> Result<Option<Vec<Option<QuantileFunction>>>> {
    let has_id = schema.columns.values().any(|r| *r == ColumnRole::Id);
    if (schema.quantiles.is_some() || schema.cgm.is_some()) && !has_id {
        return Err(Error::Schema("distributional covariates require an id column".into()));
    }
    let mut by_id: BTreeMap<String, QuantileFunction> = BTreeMap::new();
    if let Some(path) = &schema.quantiles {
        by_id = read_quantile_csv(&schema.resolve(path))?;
    } else if let Some(cgm) = &schema.cgm {
        for (subject, readings) in read_cgm_csv(&schema.resolve(&cgm.path), &schema.na_tokens)? {
            by_id.insert(subject, cgm_to_quantile(&readings, cgm.grid_size)?);
        }
    } else {
        return Ok(None);
    }
    Ok(Some(ids.iter().map(|id| by_id.get(id).cloned()).collect()))
}

/// Reads a wide quantile file: first column id, remaining columns the values
/// on the midpoint grid.
pub fn read_quantile_csv(path: &Path) -> Result<BTreeMap<String, QuantileFunction>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let id = record.get(0).unwrap_or("").to_string();
        let values = record
            .iter()
            .skip(1)
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| Error::Parse {
                    row: row + 1,
                    column: "quantile".into(),
                    message: format!("`{t}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(id, QuantileFunction::on_uniform_grid(values)?);
    }
    Ok(out)
}

/// Writes a dataset as CSV with destandardized numeric columns, level labels
/// and `NA` for unobserved responses. Quantile functions go to a separate file.
pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let cov = ds.covariates();
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(cov.numeric_names().iter().cloned());
    header.extend(cov.categorical_names().iter().cloned());
    header.push(ds.response_name().to_string());
    writer.write_record(&header)?;
    for i in 0..ds.n() {
        let mut record = vec![ds.ids()[i].clone()];
        for l in 0..cov.p_numeric() {
            record.push(format!("{}", ds.raw_numeric(i, l)));
        }
        for (l, name) in cov.categorical_names().iter().enumerate() {
            let code = cov.categorical_row(i)[l] as usize;
            let label = ds
                .encoding()
                .category_levels
                .get(name)
                .and_then(|levels| levels.get(code).cloned())
                .unwrap_or_else(|| code.to_string());
            record.push(label);
        }
        record.push(match ds.response(i) {
            Ok(y) => format!("{y}"),
            Err(_) => "NA".into(),
        });
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes the distributional block as a wide quantile CSV.
pub fn write_quantile_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let cov = ds.covariates();
    let m = cov.grid().map_or(0, <[f64]>::len);
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend((1..=m).map(|k| format!("q{k}")));
    writer.write_record(&header)?;
    for i in 0..ds.n() {
        if let Some(q) = cov.quantile(i) {
            let mut record = vec![ds.ids()[i].clone()];
            record.extend(q.values().iter().map(|v| format!("{v}")));
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Training/test partition of record indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub training: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Uniform random split without replacement; `round(fraction * n)` records
/// go to training.
pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<SplitIndex> {
    split_indices(ds.n(), fraction, seed)
}

pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<SplitIndex> {
    if n < 4 {
        return Err(Error::Insufficient(format!("cannot split {n} records, need at least 4")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} outside (0, 1)")));
    }
    let n1 = (fraction * n as f64).round() as usize;
    if n1 == 0 || n1 == n {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} leaves an empty side for n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut training = order[..n1].to_vec();
    let mut test = order[n1..].to_vec();
    training.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndex { training, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::File::create(&path).unwrap().write_all(text.as_bytes()).unwrap();
        path
    }

    fn schema(pairs: &[(&str, ColumnRole)]) -> Schema {
        Schema::new(pairs.iter().map(|(k, r)| (k.to_string(), *r)).collect())
    }

    #[test]
    fn na_responses_become_unobserved() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "d.csv", "x,y\n1,1.0\n2,NA\n4,2.0\n");
        let ds = load_dataset(&path, &schema(&[("x", ColumnRole::Numeric), ("y", ColumnRole::Response)])).unwrap();
        assert_eq!(ds.mask(), &[true, false, true]);
        assert_eq!(ds.response(2).unwrap(), 2.0);
        assert!(matches!(ds.response(1), Err(Error::Unobserved(1))));
    }

    #[test]
    fn empty_field_is_missing_too() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "d.csv", "x,y\n1,\n2,3\n");
        let ds = load_dataset(&path, &schema(&[("x", ColumnRole::Numeric), ("y", ColumnRole::Response)])).unwrap();
        assert_eq!(ds.mask(), &[false, true]);
    }

    #[test]
    fn missing_response_column_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "d.csv", "x,z\n1,2\n3,4\n");
        let err = load_dataset(&path, &schema(&[("x", ColumnRole::Numeric)])).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = load_dataset(&path, &schema(&[("x", ColumnRole::Numeric), ("y", ColumnRole::Response)])).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn constant_column_is_dropped_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "d.csv", "x,c,y\n1,5.0,1\n2,5.0,2\n3,5.0,NA\n");
        let ds = load_dataset(
            &path,
            &schema(&[("x", ColumnRole::Numeric), ("c", ColumnRole::Numeric), ("y", ColumnRole::Response)]),
        )
        .unwrap();
        assert_eq!(ds.covariates().p_numeric(), 1);
        assert_eq!(ds.warnings().len(), 1);
        assert!(ds.warnings()[0].contains("`c`"));
    }

    #[test]
    fn non_numeric_token_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "d.csv", "x,y\n1,1\nabc,2\n");
        let err = load_dataset(&path, &schema(&[("x", ColumnRole::Numeric), ("y", ColumnRole::Response)])).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
    }

    #[test]
    fn ragged_csv_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "d.csv", "x,y\n1,1\n2\n");
        let err = load_dataset(&path, &schema(&[("x", ColumnRole::Numeric), ("y", ColumnRole::Response)])).unwrap_err();
        assert!(matches!(err, Error::Csv(_)));
    }

    #[test]
    fn categorical_levels_are_coded_in_sorted_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "d.csv", "s,x,y\nm,1,1\nf,2,2\nm,3,NA\n");
        let ds = load_dataset(
            &path,
            &schema(&[("s", ColumnRole::Categorical), ("x", ColumnRole::Numeric), ("y", ColumnRole::Response)]),
        )
        .unwrap();
        assert_eq!(ds.covariates().categorical_column(0), vec![1, 0, 1]);
        assert_eq!(ds.covariates().cardinalities(), &[2]);
    }

    #[test]
    fn standardization_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let raw = [3.5, -1.25, 1e3, 7.0];
        let text: String = std::iter::once("x,y\n".to_string())
            .chain(raw.iter().map(|v| format!("{v},1\n")))
            .collect();
        let path = write(dir.path(), "d.csv", &text);
        let ds = load_dataset(&path, &schema(&[("x", ColumnRole::Numeric), ("y", ColumnRole::Response)])).unwrap();
        let col = ds.covariates().numeric_column(0);
        let mean = col.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        for (i, r) in raw.iter().enumerate() {
            assert!((ds.raw_numeric(i, 0) - r).abs() <= 1e-12 * r.abs());
        }
    }

    #[test]
    fn quantile_of_three_points_is_the_sample() {
        let q = QuantileFunction::from_sample(&[3.0, 1.0, 2.0], 3).unwrap();
        let grid = q.grid();
        assert!((grid[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((grid[1] - 0.5).abs() < 1e-15);
        assert!((grid[2] - 5.0 / 6.0).abs() < 1e-15);
        for (v, e) in q.values().iter().zip([1.0, 2.0, 3.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_of_pair_uses_midpoint_positions() {
        // Order statistics sit at p = 1/4 and 3/4, which are the grid points.
        let q = QuantileFunction::from_sample(&[10.0, 0.0], 2).unwrap();
        assert_eq!(q.values(), &[0.0, 10.0]);
        // Interior interpolation: four readings on two grid points.
        let q = QuantileFunction::from_sample(&[0.0, 10.0, 20.0, 30.0], 2).unwrap();
        // p = 1/4 -> h = 0.5 -> halfway between 0 and 10.
        assert!((q.values()[0] - 5.0).abs() < 1e-12);
        assert!((q.values()[1] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn constant_readings_give_constant_function() {
        let readings: Vec<CgmReading> = (0..50)
            .map(|k| CgmReading { timestamp: format!("t{k}"), glucose: 100.0 })
            .collect();
        let q = cgm_to_quantile(&readings, 10).unwrap();
        assert!(q.values().iter().all(|&v| v == 100.0));
    }

    #[test]
    fn too_few_finite_readings() {
        let readings: Vec<CgmReading> = [1.0, f64::NAN, 2.0]
            .iter()
            .map(|&g| CgmReading { timestamp: String::new(), glucose: g })
            .collect();
        assert!(matches!(cgm_to_quantile(&readings, 3), Err(Error::Insufficient(_))));
    }

    #[test]
    fn wasserstein_between_shifted_constants() {
        let a = QuantileFunction::on_uniform_grid(vec![100.0; 100]).unwrap();
        let b = QuantileFunction::on_uniform_grid(vec![101.0; 100]).unwrap();
        assert!((a.squared_distance(&b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(a.squared_distance(&a).unwrap(), 0.0);
        let c = QuantileFunction::new(vec![0.2, 0.7], vec![1.0, 2.0]).unwrap();
        let d = QuantileFunction::new(vec![0.25, 0.75], vec![1.0, 2.0]).unwrap();
        assert!(c.squared_distance(&d).is_err());
    }

    #[test]
    fn quantile_rejects_decreasing_values() {
        assert!(QuantileFunction::on_uniform_grid(vec![2.0, 1.0]).is_err());
        assert!(QuantileFunction::on_uniform_grid(vec![1.0]).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split_indices(10, 0.5, 7).unwrap();
        assert_eq!(s.training.len(), 5);
        assert_eq!(s.test.len(), 5);
        let mut all: Vec<usize> = s.training.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(s, split_indices(10, 0.5, 7).unwrap());
        assert_ne!(s.training, split_indices(10, 0.5, 8).unwrap().training);
    }

    #[test]
    fn split_rejects_tiny_or_one_sided() {
        assert!(split_indices(3, 0.9, 1).is_err());
        assert!(split_indices(10, 0.99, 1).is_err());
        assert!(split_indices(10, 0.0, 1).is_err());
    }

    #[test]
    fn cgm_file_feeds_distributional_block() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(dir.path(), "d.csv", "id,x,y\na,1,1\nb,2,NA\nc,3,2\n");
        let mut cgm = String::from("subject_id,timestamp,glucose\n");
        for (s, base) in [("a", 90.0), ("b", 120.0)] {
            for k in 0..4 {
                cgm.push_str(&format!("{s},2020-01-01T00:{k:02}:00,{}\n", base + k as f64));
            }
        }
        write(dir.path(), "cgm.csv", &cgm);
        let mut sc = schema(&[("id", ColumnRole::Id), ("x", ColumnRole::Numeric), ("y", ColumnRole::Response)]);
        sc.cgm = Some(CgmSource { path: "cgm.csv".into(), grid_size: 4 });
        sc.base_dir = Some(dir.path().to_path_buf());
        let ds = load_dataset(&data, &sc).unwrap();
        let cov = ds.covariates();
        assert!(cov.has_distributional());
        assert_eq!(cov.quantile(0).unwrap().values(), &[90.0, 91.0, 92.0, 93.0]);
        assert!(cov.quantile(2).is_none());
    }

    #[test]
    fn csv_round_trip_through_writer() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "d.csv", "id,x,s,y\na,1.5,u,1\nb,2.5,v,NA\nc,-3,u,2\n");
        let sc = schema(&[
            ("id", ColumnRole::Id),
            ("x", ColumnRole::Numeric),
            ("s", ColumnRole::Categorical),
            ("y", ColumnRole::Response),
        ]);
        let ds = load_dataset(&path, &sc).unwrap();
        let out = dir.path().join("out.csv");
        write_dataset_csv(&ds, &out).unwrap();
        let again = load_dataset(&out, &sc).unwrap();
        assert_eq!(again.mask(), ds.mask());
        assert_eq!(again.covariates().categorical_column(0), ds.covariates().categorical_column(0));
        for i in 0..3 {
            assert!((again.raw_numeric(i, 0) - ds.raw_numeric(i, 0)).abs() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantile_is_monotone(sample in prop::collection::vec(-1e3f64..1e3, 5..200), m in 2usize..5) {
                let q = QuantileFunction::from_sample(&sample, m).unwrap();
                prop_assert!(q.values().windows(2).all(|w| w[0] <= w[1]));
                let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(q.values().iter().all(|&v| v >= lo && v <= hi));
            }

            #[test]
            fn wasserstein_zero_iff_equal(a in prop::collection::vec(0f64..10.0, 20), b in prop::collection::vec(0f64..10.0, 20)) {
                let mut a = a; a.sort_by(f64::total_cmp);
                let mut b = b; b.sort_by(f64::total_cmp);
                let qa = QuantileFunction::on_uniform_grid(a.clone()).unwrap();
                let qb = QuantileFunction::on_uniform_grid(b.clone()).unwrap();
                let d = qa.squared_distance(&qb).unwrap();
                prop_assert_eq!(d == 0.0, a == b);
            }
        }
    }
}
