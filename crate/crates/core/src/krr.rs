//! Kernel ridge regression with missing responses.
//!
//! Three estimators share the representer form `f(x) = Σ_j α_j K(X_j, x)`:
//!
//! * complete case: ordinary KRR on the observed records;
//! * IPW: `α = (λI + WK)⁻¹ W Y` with `W = diag(raw weights)`;
//! * doubly robust: `α = (K + λI)⁻¹ (W Y + (I − W) μ(X))` with `W = diag(R/π̂)`
//!   and `μ` an imputation model.
//!
//! Responses are standardized (weighted mean and sd over observed records)
//! before fitting; predictions are returned in response units.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{Covariates, Dataset, Encoding};
use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec};
use crate::linalg;
use crate::propensity::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    CompleteCase,
    Ipw,
    DoublyRobust,
}

/// Affine map between response units and the fitting scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseScale {
    pub mean: f64,
    pub sd: f64,
}

impl ResponseScale {
    /// Mean and sd of observed responses under normalized weights `w`.
    pub fn weighted(ds: &Dataset, w: &[f64]) -> Result<Self> {
        let obs = ds.observed_indices();
        let total: f64 = obs.iter().map(|&i| w[i]).sum();
        if obs.is_empty() || total <= 0.0 {
            return Err(Error::Insufficient("no observed response carries weight".into()));
        }
        let mut mean = 0.0;
        for &i in &obs {
            mean += w[i] * ds.response(i)?;
        }
        mean /= total;
        let mut var = 0.0;
        for &i in &obs {
            var += w[i] * (ds.response(i)? - mean).powi(2);
        }
        let sd = (var / total).sqrt();
        Ok(Self { mean, sd: if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 } })
    }

    /// Doubly robust centering: the augmented mean
    /// `(1/n) Σ_i [u_i y_i + (1 − u_i) μ_i]` with `u = R/π̂`, which stays
    /// consistent when either `π̂` or `μ` is correct. The spread is the
    /// weighted sd.
    pub fn doubly_robust(ds: &Dataset, w: &WeightVector, mu: &[f64]) -> Result<Self> {
        if mu.len() != ds.n() {
            return Err(Error::InvalidArgument("one imputed value per record is required".into()));
        }
        let mut scale = Self::weighted(ds, &w.normalized)?;
        let unit = w.unit();
        let mut mean = 0.0;
        for i in 0..ds.n() {
            mean += match ds.is_observed(i) {
                true => unit[i] * ds.response(i)? + (1.0 - unit[i]) * mu[i],
                false => mu[i],
            };
        }
        scale.mean = mean / ds.n() as f64;
        Ok(scale)
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.mean) / self.sd
    }

    pub fn restore(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// A fitted kernel ridge regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub alpha: Vec<f64>,
    pub lambda: f64,
    pub spec: KernelSpec,
    pub mode: Mode,
    pub training_ref: String,
    /// Weighted leave-one-out error at `lambda` (fitting scale), when tuned.
    pub loo_error: Option<f64>,
    pub scale: ResponseScale,
    pub response_name: String,
    pub encoding: Encoding,
    pub training: Covariates,
    pub imputer: Option<Box<KrrModel>>,
}

impl KrrModel {
    /// Predictions in response units.
    pub fn predict(&self, xs: &Covariates) -> Result<Vec<f64>> {
        Ok(self.predict_standardized(xs)?.into_iter().map(|z| self.scale.restore(z)).collect())
    }

    /// Predictions on the fitting scale.
    pub fn predict_standardized(&self, xs: &Covariates) -> Result<Vec<f64>> {
        self.training.check_compatible(xs)?;
        let k = kernels::cross_gram(xs, &self.training, &self.spec)?;
        Ok((k * DVector::from_column_slice(&self.alpha)).iter().copied().collect())
    }
}

/// `20` log-spaced values spanning `[1e-6, 1e2]·trace(K)/n`.
pub fn default_lambda_grid(k: &DMatrix<f64>) -> Vec<f64> {
    let scale = k.trace() / k.nrows().max(1) as f64;
    (0..20).map(|i| scale * 10f64.powf(-6.0 + 8.0 * i as f64 / 19.0)).collect()
}

/// Fitting-scale inputs shared by all estimators.
struct Problem {
    /// Standardized responses, 0 where unobserved.
    y: DVector<f64>,
    mask: Vec<bool>,
    /// Raw IPW weights (`R/(n·π̂)`).
    raw: DVector<f64>,
    /// `R/π̂`.
    unit: DVector<f64>,
    normalized: Vec<f64>,
    /// Imputed standardized responses (doubly robust only).
    mu: Option<DVector<f64>>,
    scale: ResponseScale,
}

impl Problem {
    fn new(ds: &Dataset, w: &WeightVector, mode: Mode, imputer: Option<&KrrModel>) -> Result<Self> {
        let imputed = match (mode, imputer) {
            (Mode::DoublyRobust, Some(m)) => Some(m.predict(ds.covariates())?),
            (Mode::DoublyRobust, None) => {
                return Err(Error::InvalidArgument("doubly robust mode requires an imputation model (imputer)".into()))
            }
            _ => None,
        };
        Self::with_imputations(ds, w, imputed)
    }

    /// `imputed`: `μ(X_i)` in response units, present for the doubly robust mode.
    fn with_imputations(ds: &Dataset, w: &WeightVector, imputed: Option<Vec<f64>>) -> Result<Self> {
        if w.n() != ds.n() {
            return Err(Error::InvalidArgument("weight vector length differs from n".into()));
        }
        if ds.n_observed() == 0 {
            return Err(Error::Insufficient("no observed responses".into()));
        }
        if imputed.as_ref().is_some_and(|m| m.len() != ds.n() || m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("one finite imputed value per record is required".into()));
        }
        let scale = match &imputed {
            Some(m) => ResponseScale::doubly_robust(ds, w, m)?,
            None => ResponseScale::weighted(ds, &w.normalized)?,
        };
        let y = DVector::from_iterator(ds.n(), ds.response_or(scale.mean).into_iter().map(|v| scale.standardize(v)));
        let mu = imputed.map(|m| DVector::from_iterator(ds.n(), m.into_iter().map(|v| scale.standardize(v))));
        Ok(Self {
            y,
            mask: ds.mask().to_vec(),
            raw: DVector::from_column_slice(&w.raw),
            unit: DVector::from_vec(w.unit()),
            normalized: w.normalized.clone(),
            mu,
            scale,
        })
    }

    /// Pseudo-outcome `W y + (I − W) μ`.
    fn pseudo_outcome(&self) -> DVector<f64> {
        let mu = self.mu.as_ref().expect("doubly robust problem carries μ");
        DVector::from_fn(self.y.len(), |i, _| {
            let w = self.unit[i];
            if self.mask[i] { w * self.y[i] + (1.0 - w) * mu[i] } else { mu[i] }
        })
    }

    fn observed(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")))
    }
}

/// IPW dual coefficients `(λI + WK)⁻¹ W y`, solved through the symmetric
/// system `(λI + SKS) β = S y`, `α = S β`, `S = W^{1/2}`.
pub fn solve_ipw(k: &DMatrix<f64>, raw: &[f64], y: &[f64], lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let s = DVector::from_iterator(raw.len(), raw.iter().map(|w| w.sqrt()));
    let mut a = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| s[i] * k[(i, j)] * s[j]);
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let rhs = DVector::from_fn(raw.len(), |i, _| if raw[i] > 0.0 { s[i] * y[i] } else { 0.0 });
    let beta = linalg::solve_spd(&a, &rhs)?;
    Ok(beta.component_mul(&s))
}

/// Textbook KRR `(K + λI)⁻¹ z`.
pub fn solve_kernel_ridge(k: &DMatrix<f64>, z: &[f64], lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let mut a = k.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    linalg::solve_spd(&a, &DVector::from_column_slice(z))
}

/// Doubly robust coefficients `(K + λI)⁻¹ (W y + (I − W) μ)` with `W = diag(unit)`.
pub fn solve_dr(k: &DMatrix<f64>, unit: &[f64], y: &[f64], mu: &[f64], lambda: f64) -> Result<DVector<f64>> {
    let z: Vec<f64> = (0..unit.len()).map(|i| unit[i] * y[i] + (1.0 - unit[i]) * mu[i]).collect();
    solve_kernel_ridge(k, &z, lambda)
}

/// Complete-case coefficients: KRR on observed records, zero elsewhere.
pub fn solve_complete_case(k: &DMatrix<f64>, mask: &[bool], y: &[f64], lambda: f64) -> Result<DVector<f64>> {
    let obs: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let koo = k.select_rows(&obs).select_columns(&obs);
    let yo: Vec<f64> = obs.iter().map(|&i| y[i]).collect();
    let a = solve_kernel_ridge(&koo, &yo, lambda)?;
    let mut alpha = DVector::zeros(mask.len());
    for (t, &i) in obs.iter().enumerate() {
        alpha[i] = a[t];
    }
    Ok(alpha)
}

fn solve_mode(k: &DMatrix<f64>, p: &Problem, mode: Mode, lambda: f64) -> Result<DVector<f64>> {
    match mode {
        Mode::Ipw => solve_ipw(k, p.raw.as_slice(), p.y.as_slice(), lambda),
        Mode::DoublyRobust => solve_kernel_ridge(k, p.pseudo_outcome().as_slice(), lambda),
        Mode::CompleteCase => solve_complete_case(k, &p.mask, p.y.as_slice(), lambda),
    }
}

/// Fits the estimator of `mode` at a fixed `lambda`. `imputer` is required
/// for the doubly robust mode.
pub fn fit(
    ds: &Dataset,
    spec: &KernelSpec,
    w: &WeightVector,
    lambda: f64,
    mode: Mode,
    imputer: Option<&KrrModel>,
) -> Result<KrrModel> {
    let k = kernels::gram(ds.covariates(), spec)?.values;
    fit_with_gram(ds, &k, spec, w, lambda, mode, imputer)
}

pub fn fit_with_gram(
    ds: &Dataset,
    k: &DMatrix<f64>,
    spec: &KernelSpec,
    w: &WeightVector,
    lambda: f64,
    mode: Mode,
    imputer: Option<&KrrModel>,
) -> Result<KrrModel> {
    let p = Problem::new(ds, w, mode, imputer)?;
    model_from(ds, k, spec, &p, lambda, mode, imputer)
}

fn model_from(
    ds: &Dataset,
    k: &DMatrix<f64>,
    spec: &KernelSpec,
    p: &Problem,
    lambda: f64,
    mode: Mode,
    imputer: Option<&KrrModel>,
) -> Result<KrrModel> {
    let alpha = solve_mode(k, p, mode, lambda)?;
    Ok(KrrModel {
        alpha: alpha.iter().copied().collect(),
        lambda,
        spec: *spec,
        mode,
        training_ref: ds.fingerprint(),
        loo_error: None,
        scale: p.scale,
        response_name: ds.response_name().to_string(),
        encoding: ds.encoding().clone(),
        training: ds.covariates().clone(),
        imputer: imputer.map(|m| Box::new(m.clone())),
    })
}

/// Outcome of [`loo_lambda`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooSelection {
    pub lambda: f64,
    pub loo_error: f64,
    /// `(λ, weighted LOO error)` per grid point; `None` where skipped.
    pub path: Vec<(f64, Option<f64>)>,
    pub warnings: Vec<String>,
}

/// Spectral form of a linear smoother family `H(λ)` with `ŷ = H(λ) t`.
struct Spectral {
    /// `left_ik`, `right_ik`, `eig_k`: `H_ij = Σ_k left_ik right_jk / (eig_k + λ)`.
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    eig: DVector<f64>,
}

impl Spectral {
    /// Symmetric `B = Q Σ Qᵀ`: `H = L Q (Σ + λ)⁻¹ Qᵀ R` with given outer factors.
    fn new(b: DMatrix<f64>, left: impl Fn(&DMatrix<f64>) -> DMatrix<f64>, right: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        let SymmetricEigen { eigenvectors, eigenvalues } = SymmetricEigen::new(b);
        let eig = eigenvalues.map(|v| v.max(0.0));
        Self { left: left(&eigenvectors), right: right(&eigenvectors), eig }
    }

    fn diag(&self, lambda: f64) -> DVector<f64> {
        DVector::from_fn(self.left.nrows(), |i, _| {
            (0..self.eig.len()).map(|k| self.left[(i, k)] * self.right[(i, k)] / (self.eig[k] + lambda)).sum()
        })
    }

    fn apply(&self, t: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let c = self.right.transpose() * t;
        let scaled = DVector::from_fn(c.len(), |k, _| c[k] / (self.eig[k] + lambda));
        &self.left * scaled
    }
}

/// LOO residuals (standardized scale, indexed like the observed records of
/// `p`) for every λ; `Err` entries mark λ with `H_ii ≥ 1`.
fn loo_path(k: &DMatrix<f64>, p: &Problem, mode: Mode, grid: &[f64]) -> Vec<std::result::Result<Vec<f64>, String>> {
    let obs = p.observed();
    match mode {
        Mode::Ipw => {
            let s = p.raw.map(f64::sqrt);
            let b = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| s[i] * k[(i, j)] * s[j]);
            let ks = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * s[j]);
            let sp = Spectral::new(b, |q| &ks * q, |q| DMatrix::from_fn(q.nrows(), q.ncols(), |i, c| s[i] * q[(i, c)]));
            let t = p.y.clone();
            grid.iter().map(|&l| shortcut(&sp, &t, &t, &obs, l)).collect()
        }
        Mode::DoublyRobust => {
            let sp = Spectral::new(k.clone(), |q| k * q, |q| q.clone());
            let z = p.pseudo_outcome();
            grid.iter().map(|&l| shortcut(&sp, &z, &p.y, &obs, l)).collect()
        }
        Mode::CompleteCase => {
            let koo = k.select_rows(&obs).select_columns(&obs);
            let sp = Spectral::new(koo.clone(), |q| &koo * q, |q| q.clone());
            let yo = DVector::from_iterator(obs.len(), obs.iter().map(|&i| p.y[i]));
            let local: Vec<usize> = (0..obs.len()).collect();
            grid.iter().map(|&l| shortcut(&sp, &yo, &yo, &local, l)).collect()
        }
    }
}

/// `y_i − ŷ_{−i}` with `ŷ_{−i} = t_i − (t_i − ŷ_i)/(1 − H_ii)`, for the
/// smoother applied to targets `t`.
fn shortcut(sp: &Spectral, t: &DVector<f64>, y: &DVector<f64>, rows: &[usize], lambda: f64) -> std::result::Result<Vec<f64>, String> {
    let fitted = sp.apply(t, lambda);
    let h = sp.diag(lambda);
    let mut out = Vec::with_capacity(rows.len());
    for &i in rows {
        let denom = 1.0 - h[i];
        if denom <= 1e-12 {
            return Err(format!("lambda {lambda:e}: leverage of record {i} is {:.6}", h[i]));
        }
        let loo_pred = t[i] - (t[i] - fitted[i]) / denom;
        out.push(y[i] - loo_pred);
    }
    Ok(out)
}

/// Weighted LOO residuals `(observed index, residual)` at one `lambda`.
pub fn loo_residuals(
    ds: &Dataset,
    spec: &KernelSpec,
    w: &WeightVector,
    lambda: f64,
    mode: Mode,
    imputer: Option<&KrrModel>,
) -> Result<Vec<(usize, f64)>> {
    check_lambda(lambda)?;
    let k = kernels::gram(ds.covariates(), spec)?.values;
    let p = Problem::new(ds, w, mode, imputer)?;
    let res = loo_path(&k, &p, mode, &[lambda]).pop().expect("one grid point");
    let res = res.map_err(Error::Degenerate)?;
    Ok(p.observed().into_iter().zip(res).collect())
}

/// Picks λ from `grid` minimizing `Σ_obs w*_i e_i²` over LOO residuals;
/// ties go to the larger λ.
pub fn loo_lambda(
    ds: &Dataset,
    spec: &KernelSpec,
    w: &WeightVector,
    grid: &[f64],
    mode: Mode,
    imputer: Option<&KrrModel>,
) -> Result<LooSelection> {
    let k = kernels::gram(ds.covariates(), spec)?.values;
    loo_lambda_with_gram(ds, &k, w, grid, mode, imputer)
}

pub fn loo_lambda_with_gram(
    ds: &Dataset,
    k: &DMatrix<f64>,
    w: &WeightVector,
    grid: &[f64],
    mode: Mode,
    imputer: Option<&KrrModel>,
) -> Result<LooSelection> {
    let p = Problem::new(ds, w, mode, imputer)?;
    select_on(k, &p, grid, mode)
}

fn select_on(k: &DMatrix<f64>, p: &Problem, grid: &[f64], mode: Mode) -> Result<LooSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    let obs = p.observed();
    let mut path = Vec::with_capacity(grid.len());
    let mut warnings = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for (&lambda, res) in grid.iter().zip(loo_path(k, p, mode, grid)) {
        match res {
            Ok(e) => {
                let err: f64 = obs.iter().zip(&e).map(|(&i, r)| p.normalized[i] * r * r).sum();
                path.push((lambda, Some(err)));
                let better = match best {
                    None => true,
                    Some((bl, be)) => err < be || (err == be && lambda > bl),
                };
                if better {
                    best = Some((lambda, err));
                }
            }
            Err(msg) => {
                warnings.push(format!("skipped {msg}"));
                path.push((lambda, None));
            }
        }
    }
    let (lambda, loo_error) =
        best.ok_or_else(|| Error::Degenerate("every lambda on the grid has a leverage of 1".into()))?;
    Ok(LooSelection { lambda, loo_error, path, warnings })
}

/// Complete-case KRR used as the imputation model `μ`. With `lambda = None`
/// the ridge level is tuned by LOO over the default grid.
pub fn impute(ds: &Dataset, spec: &KernelSpec, w: &WeightVector, lambda: Option<f64>) -> Result<KrrModel> {
    if ds.n_observed() < 2 {
        return Err(Error::Insufficient("imputation needs at least 2 observed responses".into()));
    }
    let k = kernels::gram(ds.covariates(), spec)?.values;
    let (lambda, loo) = match lambda {
        Some(l) => (l, None),
        None => {
            let sel = loo_lambda_with_gram(ds, &k, w, &default_lambda_grid(&k), Mode::CompleteCase, None)?;
            (sel.lambda, Some(sel.loo_error))
        }
    };
    let mut model = fit_with_gram(ds, &k, spec, w, lambda, Mode::CompleteCase, None)?;
    model.loo_error = loo;
    Ok(model)
}

/// LOO-tuned fit: selects λ over `grid` (default grid when `None`) and refits.
pub fn fit_tuned(
    ds: &Dataset,
    spec: &KernelSpec,
    w: &WeightVector,
    mode: Mode,
    imputer: Option<&KrrModel>,
    grid: Option<&[f64]>,
) -> Result<(KrrModel, LooSelection)> {
    let k = kernels::gram(ds.covariates(), spec)?.values;
    let default;
    let grid = match grid {
        Some(g) => g,
        None => {
            default = default_lambda_grid(&k);
            &default
        }
    };
    let sel = loo_lambda_with_gram(ds, &k, w, grid, mode, imputer)?;
    let mut model = fit_with_gram(ds, &k, spec, w, sel.lambda, mode, imputer)?;
    model.loo_error = Some(sel.loo_error);
    Ok((model, sel))
}

/// Doubly robust LOO-tuned fit with imputations `mu` (response units, one
/// per record) supplied by an external model.
pub fn fit_tuned_imputed(
    ds: &Dataset,
    spec: &KernelSpec,
    w: &WeightVector,
    mu: &[f64],
    grid: Option<&[f64]>,
) -> Result<(KrrModel, LooSelection)> {
    let k = kernels::gram(ds.covariates(), spec)?.values;
    let p = Problem::with_imputations(ds, w, Some(mu.to_vec()))?;
    let default;
    let grid = match grid {
        Some(g) => g,
        None => {
            default = default_lambda_grid(&k);
            &default
        }
    };
    let sel = select_on(&k, &p, grid, Mode::DoublyRobust)?;
    let mut model = model_from(ds, &k, spec, &p, sel.lambda, Mode::DoublyRobust, None)?;
    model.loo_error = Some(sel.loo_error);
    Ok((model, sel))
}

/// Weighted R² `1 − Σ w*_i e_i² / Σ w*_i (y_i − ȳ_w)²` over observed records.
/// `residuals` pairs an observed record index with its residual.
pub fn weighted_r2(ds: &Dataset, w: &[f64], residuals: &[(usize, f64)]) -> Result<f64> {
    let obs = ds.observed_indices();
    let total: f64 = obs.iter().map(|&i| w[i]).sum();
    if total <= 0.0 {
        return Err(Error::Insufficient("no observed response carries weight".into()));
    }
    let mut mean = 0.0;
    for &i in &obs {
        mean += w[i] * ds.response(i)?;
    }
    mean /= total;
    let mut tss = 0.0;
    for &i in &obs {
        tss += w[i] * (ds.response(i)? - mean).powi(2);
    }
    if tss <= 0.0 {
        return Err(Error::Degenerate("observed responses are constant".into()));
    }
    let rss: f64 = residuals.iter().map(|&(i, e)| w[i] * e * e).sum();
    Ok(1.0 - rss / tss)
}

/// LOO-based weighted R² of the `mode` estimator at `lambda`, in response units.
pub fn loo_r2(
    ds: &Dataset,
    spec: &KernelSpec,
    w: &WeightVector,
    lambda: f64,
    mode: Mode,
    imputer: Option<&KrrModel>,
) -> Result<f64> {
    let scale = ResponseScale::weighted(ds, &w.normalized)?;
    let res: Vec<(usize, f64)> = loo_residuals(ds, spec, w, lambda, mode, imputer)?
        .into_iter()
        .map(|(i, e)| (i, e * scale.sd))
        .collect();
    weighted_r2(ds, &w.normalized, &res)
}
