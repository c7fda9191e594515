//! Gaussian kernels over mixed covariates.
//!
//! Each source gets its own squared distance: Wasserstein-2 between
//! quantile functions, squared Euclidean over standardized numerics and the
//! Hamming count over categorical codes. The global kernel is
//!
//! ```text
//! K(x, y) = exp(-(a·d_gluco²/σ_gluco² + b·d_mult²/σ_mult² + c·d_categ²/σ_categ²))
//! ```
//!
//! with `(a, b, c)` on the simplex.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Covariates, Dataset};
use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

/// Bandwidths and simplex weights of the global Gaussian kernel.
///
/// `gamma` records the exponent used to derive the bandwidths from
/// median-heuristic bases (`σ = σ_median^gamma`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub sigma_gluco: f64,
    pub sigma_mult: f64,
    pub sigma_categ: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub gamma: f64,
}

impl KernelSpec {
    /// Kernel on the numeric block only.
    pub fn numeric(sigma: f64) -> Self {
        Self {
            sigma_gluco: 1.0,
            sigma_mult: sigma,
            sigma_categ: 1.0,
            a: 0.0,
            b: 1.0,
            c: 0.0,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("sigma_gluco", self.sigma_gluco),
            ("sigma_mult", self.sigma_mult),
            ("sigma_categ", self.sigma_categ),
        ] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {s}")));
            }
        }
        if [self.a, self.b, self.c].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("simplex weights must be nonnegative".into()));
        }
        if (self.a + self.b + self.c - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!(
                "simplex weights sum to {}, expected 1",
                self.a + self.b + self.c
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 3.0) {
            return Err(Error::InvalidArgument(format!("gamma {} outside (0, 3]", self.gamma)));
        }
        Ok(())
    }

    /// Exponent of the global kernel for one pair of records.
    fn exponent(&self, d: &SourceDistances) -> Result<f64> {
        let mut e = 0.0;
        if self.a > 0.0 {
            let g = d.gluco.ok_or_else(|| {
                Error::InvalidArgument("a > 0 but a record lacks its distributional covariate".into())
            })?;
            e += self.a * g / (self.sigma_gluco * self.sigma_gluco);
        }
        if self.b > 0.0 {
            e += self.b * d.mult / (self.sigma_mult * self.sigma_mult);
        }
        if self.c > 0.0 {
            e += self.c * d.categ / (self.sigma_categ * self.sigma_categ);
        }
        Ok(e)
    }

    pub fn evaluate(&self, d: &SourceDistances) -> Result<f64> {
        Ok((-self.exponent(d)?).exp())
    }
}

/// Squared distances between two records, one per source. `gluco` is `None`
/// when either record lacks a quantile function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceDistances {
    pub gluco: Option<f64>,
    pub mult: f64,
    pub categ: f64,
}

/// Per-source squared distances between record `i` of `x` and record `j` of `y`.
pub fn source_distances(x: &Covariates, i: usize, y: &Covariates, j: usize) -> SourceDistances {
    let gluco = match (x.quantile(i), y.quantile(j)) {
        (Some(p), Some(q)) => p.squared_distance(q).ok(),
        _ => None,
    };
    let mult = x
        .numeric_row(i)
        .iter()
        .zip(y.numeric_row(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let categ = x
        .categorical_row(i)
        .iter()
        .zip(y.categorical_row(j))
        .filter(|(a, b)| a != b)
        .count() as f64;
    SourceDistances { gluco, mult, categ }
}

/// Dataset-level form of [`source_distances`].
pub fn dataset_distances(ds: &Dataset, i: usize, j: usize) -> SourceDistances {
    source_distances(ds.covariates(), i, ds.covariates(), j)
}

/// Squared-distance matrices per source. Entries of `gluco` are NaN where a
/// record lacks its quantile function; `gluco` is `None` when the block is absent.
#[derive(Debug, Clone)]
pub struct DistanceMatrices {
    pub gluco: Option<DMatrix<f64>>,
    pub mult: DMatrix<f64>,
    pub categ: DMatrix<f64>,
}

impl DistanceMatrices {
    /// Distances between all records of `x` and all records of `y`.
    pub fn between(x: &Covariates, y: &Covariates) -> Self {
        let (n, m) = (x.n(), y.n());
        let rows: Vec<Vec<SourceDistances>> = (0..n)
            .into_par_iter()
            .map(|i| (0..m).map(|j| source_distances(x, i, y, j)).collect())
            .collect();
        let has_gluco = x.has_distributional() && y.has_distributional();
        let gluco = has_gluco.then(|| DMatrix::from_fn(n, m, |i, j| rows[i][j].gluco.unwrap_or(f64::NAN)));
        Self {
            gluco,
            mult: DMatrix::from_fn(n, m, |i, j| rows[i][j].mult),
            categ: DMatrix::from_fn(n, m, |i, j| rows[i][j].categ),
        }
    }

    /// Symmetric distances within one set of covariates.
    pub fn within(x: &Covariates) -> Self {
        let n = x.n();
        let rows: Vec<Vec<SourceDistances>> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| source_distances(x, i, x, j)).collect())
            .collect();
        let mut gluco = x.has_distributional().then(|| DMatrix::zeros(n, n));
        let mut mult = DMatrix::zeros(n, n);
        let mut categ = DMatrix::zeros(n, n);
        for i in 0..n {
            if let Some(g) = gluco.as_mut() {
                if x.quantile(i).is_none() {
                    g[(i, i)] = f64::NAN;
                }
            }
            for (k, d) in rows[i].iter().enumerate() {
                let j = i + 1 + k;
                mult[(i, j)] = d.mult;
                mult[(j, i)] = d.mult;
                categ[(i, j)] = d.categ;
                categ[(j, i)] = d.categ;
                if let Some(g) = gluco.as_mut() {
                    let v = d.gluco.unwrap_or(f64::NAN);
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
        }
        Self { gluco, mult, categ }
    }

    pub fn nrows(&self) -> usize {
        self.mult.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mult.ncols()
    }

    /// Kernel values `exp(-(a·d_g/σ_g² + b·d_m/σ_m² + c·d_c/σ_c²))`.
    pub fn kernel(&self, spec: &KernelSpec) -> Result<DMatrix<f64>> {
        spec.validate()?;
        let (n, m) = (self.nrows(), self.ncols());
        let mut exponent = DMatrix::zeros(n, m);
        if spec.a > 0.0 {
            let g = self.gluco.as_ref().ok_or_else(|| {
                Error::InvalidArgument("a > 0 but the distributional block is absent".into())
            })?;
            if let Some(k) = g.iter().position(|v| v.is_nan()) {
                return Err(Error::InvalidArgument(format!(
                    "a > 0 but record {} lacks its distributional covariate",
                    k % n
                )));
            }
            exponent += g * (spec.a / (spec.sigma_gluco * spec.sigma_gluco));
        }
        if spec.b > 0.0 {
            exponent += &self.mult * (spec.b / (spec.sigma_mult * spec.sigma_mult));
        }
        if spec.c > 0.0 {
            exponent += &self.categ * (spec.c / (spec.sigma_categ * spec.sigma_categ));
        }
        Ok(exponent.map(|e| (-e).exp()))
    }

    /// The distance matrix of one source under an unweighted sum of all
    /// present sources (used for locality weights).
    pub fn total(&self) -> DMatrix<f64> {
        let mut d = &self.mult + &self.categ;
        if let Some(g) = &self.gluco {
            d += g.map(|v| if v.is_nan() { 0.0 } else { v });
        }
        d
    }
}

/// A symmetric kernel matrix over one dataset together with its spec.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub spec: KernelSpec,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Gram matrix of the global kernel over `x`.
pub fn gram(x: &Covariates, spec: &KernelSpec) -> Result<GramMatrix> {
    gram_from_distances(&DistanceMatrices::within(x), spec)
}

pub fn gram_from_distances(d: &DistanceMatrices, spec: &KernelSpec) -> Result<GramMatrix> {
    let mut values = d.kernel(spec)?;
    for i in 0..values.nrows() {
        values[(i, i)] = 1.0;
    }
    Ok(GramMatrix { values, spec: *spec })
}

/// Kernel values between rows of `x` and rows of `y`.
pub fn cross_gram(x: &Covariates, y: &Covariates, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    DistanceMatrices::between(x, y).kernel(spec)
}

/// Median-heuristic bandwidth from pairwise squared distances.
///
/// Unweighted, `σ = sqrt(median(d²))`. With `weights` (one mass per pair) the
/// median is the weighted 0.5-quantile; a cumulative mass landing exactly on
/// one half averages the two neighbouring atoms so that equal masses
/// reproduce the ordinary median. If the median is zero while some distance
/// is positive, the median of the positive distances is used instead.
pub fn median_heuristic(distances2: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if let Some(w) = weights {
        if w.len() != distances2.len() {
            return Err(Error::InvalidArgument("one weight per pairwise distance is required".into()));
        }
        if w.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidArgument("pair weights must be nonnegative".into()));
        }
    }
    let mut atoms: Vec<(f64, f64)> = distances2
        .iter()
        .enumerate()
        .map(|(k, &d)| (d, weights.map_or(1.0, |w| w[k])))
        .filter(|&(_, m)| m > 0.0)
        .collect();
    if atoms.iter().any(|(d, _)| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::InvalidArgument("squared distances must be finite and nonnegative".into()));
    }
    if !atoms.iter().any(|&(d, _)| d > 0.0) {
        return Err(Error::Degenerate("all pairwise distances are zero".into()));
    }
    let mut median = weighted_median(&mut atoms);
    if median <= 0.0 {
        atoms.retain(|&(d, _)| d > 0.0);
        median = weighted_median(&mut atoms);
    }
    Ok(median.sqrt())
}

fn weighted_median(atoms: &mut [(f64, f64)]) -> f64 {
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Merge ties into single atoms.
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for &(d, m) in atoms.iter() {
        match merged.last_mut() {
            Some(last) if last.0 == d => last.1 += m,
            _ => merged.push((d, m)),
        }
    }
    let total: f64 = merged.iter().map(|a| a.1).sum();
    let half = 0.5 * total;
    let tol = 1e-12 * total;
    let mut cum = 0.0;
    for (k, &(d, m)) in merged.iter().enumerate() {
        cum += m;
        if (cum - half).abs() <= tol && k + 1 < merged.len() {
            return 0.5 * (d + merged[k + 1].0);
        }
        if cum >= half {
            return d;
        }
    }
    merged.last().map_or(0.0, |a| a.0)
}

/// Upper-triangle entries of `d` and, when `w` is given, the pair masses
/// `w_i·w_j`. Pairs involving NaN distances are skipped.
pub fn pair_distances(d: &DMatrix<f64>, w: Option<&[f64]>) -> (Vec<f64>, Option<Vec<f64>>) {
    let n = d.nrows();
    let mut dist = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut mass = w.map(|_| Vec::with_capacity(dist.capacity()));
    for i in 0..n {
        for j in i + 1..n {
            let v = d[(i, j)];
            if v.is_nan() {
                continue;
            }
            dist.push(v);
            if let (Some(mass), Some(w)) = (mass.as_mut(), w) {
                mass.push(w[i] * w[j]);
            }
        }
    }
    (dist, mass)
}

/// Median-heuristic bandwidth of each source; `None` for absent or
/// uninformative (all-zero distance) sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseBandwidths {
    pub gluco: Option<f64>,
    pub mult: Option<f64>,
    pub categ: Option<f64>,
}

impl BaseBandwidths {
    pub fn from_distances(d: &DistanceMatrices, weights: Option<&[f64]>) -> Result<Self> {
        let one = |m: &DMatrix<f64>| -> Result<Option<f64>> {
            let (dist, mass) = pair_distances(m, weights);
            if dist.is_empty() {
                return Ok(None);
            }
            match median_heuristic(&dist, mass.as_deref()) {
                Ok(s) => Ok(Some(s)),
                Err(Error::Degenerate(_)) => Ok(None),
                Err(e) => Err(e),
            }
        };
        Ok(Self {
            gluco: d.gluco.as_ref().map(one).transpose()?.flatten(),
            mult: one(&d.mult)?,
            categ: one(&d.categ)?,
        })
    }

    /// Spec with `σ_s = base_s^gamma`; absent sources get bandwidth 1 and must
    /// carry zero simplex weight.
    pub fn spec(&self, a: f64, b: f64, c: f64, gamma: f64) -> Result<KernelSpec> {
        for (name, w, base) in [("a", a, self.gluco), ("b", b, self.mult), ("c", c, self.categ)] {
            if w > 0.0 && base.is_none() {
                return Err(Error::InvalidArgument(format!(
                    "simplex weight {name} = {w} on an absent or constant source"
                )));
            }
        }
        let spec = KernelSpec {
            sigma_gluco: self.gluco.map_or(1.0, |s| s.powf(gamma)),
            sigma_mult: self.mult.map_or(1.0, |s| s.powf(gamma)),
            sigma_categ: self.categ.map_or(1.0, |s| s.powf(gamma)),
            a,
            b,
            c,
            gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Equal simplex weight over the informative sources, `gamma = 1`.
    pub fn balanced_spec(&self) -> Result<KernelSpec> {
        let present = [self.gluco, self.mult, self.categ].map(|s| s.is_some());
        let k = present.iter().filter(|&&p| p).count();
        if k == 0 {
            return Err(Error::Degenerate("no informative covariate source".into()));
        }
        let w = |p: bool| if p { 1.0 / k as f64 } else { 0.0 };
        self.spec(w(present[0]), w(present[1]), w(present[2]), 1.0)
    }
}

/// Search grid for [`tune_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub gammas: Vec<f64>,
    pub simplex_step: f64,
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            gammas: (1..=12).map(|k| 0.25 * k as f64).collect(),
            simplex_step: 0.25,
        }
    }
}

/// Barycentric lattice points `(a, b, c)` with spacing `step`, in ascending
/// lexicographic order.
pub fn simplex_lattice(step: f64) -> Result<Vec<(f64, f64, f64)>> {
    let k = (1.0 / step).round();
    if !(step > 0.0 && step <= 1.0) || ((k * step) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("simplex step {step} must divide 1")));
    }
    let k = k as usize;
    let mut points = Vec::new();
    for i in 0..=k {
        for j in 0..=k - i {
            let l = k - i - j;
            points.push((i as f64 / k as f64, j as f64 / k as f64, l as f64 / k as f64));
        }
    }
    Ok(points)
}

/// Outcome of [`tune_spec`].
#[derive(Debug, Clone, PartialEq)]
pub struct TunedSpec {
    pub spec: KernelSpec,
    pub score: f64,
    pub evaluated: usize,
}

/// Exhaustive search over `gamma × simplex` minimizing `objective`.
///
/// Bandwidths come from the (optionally weighted) per-source median heuristic
/// raised to `gamma`. Lattice points putting weight on an absent source are
/// skipped. Ties go to the smallest `gamma`, then the lexicographically
/// smallest `(a, b, c)`.
pub fn tune_spec<F>(x: &Covariates, weights: Option<&[f64]>, objective: F, grid: &TuneGrid) -> Result<TunedSpec>
where
    F: Fn(&KernelSpec) -> Result<f64> + Sync,
{
    let distances = DistanceMatrices::within(x);
    let base = BaseBandwidths::from_distances(&distances, weights)?;
    tune_with_bases(&base, objective, grid)
}

pub fn tune_with_bases<F>(base: &BaseBandwidths, objective: F, grid: &TuneGrid) -> Result<TunedSpec>
where
    F: Fn(&KernelSpec) -> Result<f64> + Sync,
{
    let mut gammas = grid.gammas.clone();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let lattice = simplex_lattice(grid.simplex_step)?;
    let candidates: Vec<KernelSpec> = gammas
        .iter()
        .flat_map(|&g| lattice.iter().filter_map(move |&(a, b, c)| base.spec(a, b, c, g).ok()))
        .collect();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("tuning grid has no feasible point".into()));
    }
    let scores: Vec<Result<f64>> = candidates.par_iter().map(&objective).collect();
    let mut best: Option<(usize, f64)> = None;
    let mut last_err = None;
    for (k, s) in scores.into_iter().enumerate() {
        match s {
            Ok(v) if v.is_finite() => {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((k, v));
                }
            }
            Ok(v) => last_err = Some(Error::Degenerate(format!("objective returned {v}"))),
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((k, score)) => Ok(TunedSpec {
            spec: candidates[k],
            score,
            evaluated: candidates.len(),
        }),
        None => Err(last_err.unwrap_or_else(|| Error::Degenerate("objective failed everywhere".into()))),
    }
}

/// One-column covariates holding the response, with 0 for unobserved records.
pub fn response_covariates(ds: &Dataset) -> Covariates {
    Covariates::from_numeric_columns(vec![ds.response_name().to_string()], &[ds.response_or(0.0)])
        .expect("response vector is finite and has n rows")
}
