//! Observation-probability models and inverse-probability weights.
//!
//! `π(x) = P(R = 1 | X = x)` is modelled by logistic regression on a
//! feature block built from the covariates: standardized numerics,
//! reference-coded categoricals and, for quantile-function covariates, the
//! (standardized) mean and standard deviation of the quantile values.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Covariates, Dataset};
use crate::error::{Error, Result};
use crate::linalg;

/// Default lower bound applied to `π̂` before inverting it.
pub const DEFAULT_CLIP_FLOOR: f64 = 0.01;

/// Penalty on the logistic coefficients.
///
/// `L2(λ)` adds `λ/2·‖(β0, β)‖²` (the intercept is penalized so that
/// degenerate masks still give finite fits); `L1(λ)` adds `λ·‖β‖₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "lambda", rename_all = "lowercase")]
pub enum Regularization {
    None,
    L2(f64),
    L1(f64),
}

/// Which covariates enter the propensity model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSelection {
    #[serde(default)]
    pub numeric: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub distributional: bool,
}

impl FeatureSelection {
    /// Every covariate of `cov`.
    pub fn all(cov: &Covariates) -> Self {
        Self {
            numeric: cov.numeric_names().to_vec(),
            categorical: cov.categorical_names().to_vec(),
            distributional: cov.has_distributional(),
        }
    }

    /// Intercept-only model.
    pub fn intercept_only() -> Self {
        Self::default()
    }

    /// A single named column; `"gluco"` selects the distributional summaries.
    pub fn single(cov: &Covariates, name: &str) -> Result<Self> {
        if cov.numeric_names().iter().any(|c| c == name) {
            Ok(Self { numeric: vec![name.into()], ..Self::default() })
        } else if cov.categorical_names().iter().any(|c| c == name) {
            Ok(Self { categorical: vec![name.into()], ..Self::default() })
        } else if name == GLUCO && cov.has_distributional() {
            Ok(Self { distributional: true, ..Self::default() })
        } else {
            Err(Error::SchemaMismatch(format!("no covariate `{name}`")))
        }
    }
}

/// Name used for the distributional block in feature lists and reports.
pub const GLUCO: &str = "gluco";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
enum Feature {
    Numeric { column: usize },
    Level { column: usize, code: u32 },
    GlucoMean { center: f64, scale: f64 },
    GlucoSd { center: f64, scale: f64 },
}

fn feature_value(f: &Feature, cov: &Covariates, i: usize) -> Result<f64> {
    Ok(match f {
        Feature::Numeric { column } => cov.numeric_row(i)[*column],
        Feature::Level { column, code } => (cov.categorical_row(i)[*column] == *code) as u8 as f64,
        Feature::GlucoMean { center, scale } => (gluco(cov, i)?.mean() - center) / scale,
        Feature::GlucoSd { center, scale } => (gluco(cov, i)?.sd() - center) / scale,
    })
}

fn gluco(cov: &Covariates, i: usize) -> Result<&crate::data::QuantileFunction> {
    cov.quantile(i).ok_or_else(|| {
        Error::InvalidArgument(format!("record {i} lacks the distributional covariate used by the propensity model"))
    })
}

fn build_features(cov: &Covariates, sel: &FeatureSelection) -> Result<(Vec<Feature>, Vec<String>)> {
    let mut features = Vec::new();
    let mut names = Vec::new();
    for name in &sel.numeric {
        let column = cov
            .numeric_names()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("no numeric column `{name}`")))?;
        features.push(Feature::Numeric { column });
        names.push(name.clone());
    }
    for name in &sel.categorical {
        let column = cov
            .categorical_names()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("no categorical column `{name}`")))?;
        for code in 1..cov.cardinalities()[column] {
            features.push(Feature::Level { column, code });
            names.push(format!("{name}={code}"));
        }
    }
    if sel.distributional {
        let present: Vec<&crate::data::QuantileFunction> =
            (0..cov.n()).map(|i| gluco(cov, i)).collect::<Result<_>>()?;
        let standardize = |v: Vec<f64>| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        };
        let (c, s) = standardize(present.iter().map(|q| q.mean()).collect());
        features.push(Feature::GlucoMean { center: c, scale: s });
        names.push(format!("{GLUCO}_mean"));
        let (c, s) = standardize(present.iter().map(|q| q.sd()).collect());
        features.push(Feature::GlucoSd { center: c, scale: s });
        names.push(format!("{GLUCO}_sd"));
    }
    Ok((features, names))
}

/// Design matrix with a leading intercept column.
fn design(features: &[Feature], cov: &Covariates) -> Result<DMatrix<f64>> {
    let n = cov.n();
    let mut x = DMatrix::from_element(n, features.len() + 1, 1.0);
    for (k, f) in features.iter().enumerate() {
        for i in 0..n {
            let v = feature_value(f, cov, i)?;
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite propensity feature for record {i}")));
            }
            x[(i, k + 1)] = v;
        }
    }
    Ok(x)
}

/// Fitted logistic model `π(x) = 1 / (1 + exp(-β0 - βᵀx))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub feature_names: Vec<String>,
    pub selection: FeatureSelection,
    pub regularization: Regularization,
    pub converged: bool,
    pub iterations: usize,
    features: Vec<Feature>,
}

impl PropensityModel {
    /// Constant probability model (used when no fit is needed).
    pub fn constant(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!("constant propensity {p} outside (0, 1]")));
        }
        let p = p.min(1.0 - 1e-12);
        Ok(Self {
            beta0: (p / (1.0 - p)).ln(),
            beta: Vec::new(),
            feature_names: Vec::new(),
            selection: FeatureSelection::intercept_only(),
            regularization: Regularization::None,
            converged: true,
            iterations: 0,
            features: Vec::new(),
        })
    }

    /// `π̂` for every record of `cov`.
    pub fn predict(&self, cov: &Covariates) -> Result<Vec<f64>> {
        let x = design(&self.features, cov)?;
        let theta = self.theta();
        Ok((x * theta).iter().map(|&eta| sigmoid(eta)).collect())
    }

    /// `π̂` for a single record.
    pub fn predict_one(&self, cov: &Covariates, i: usize) -> Result<f64> {
        let mut eta = self.beta0;
        for (f, b) in self.features.iter().zip(&self.beta) {
            eta += b * feature_value(f, cov, i)?;
        }
        Ok(sigmoid(eta))
    }

    fn theta(&self) -> DVector<f64> {
        DVector::from_iterator(self.beta.len() + 1, std::iter::once(self.beta0).chain(self.beta.iter().copied()))
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Iteration controls for [`fit_propensity_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-8 }
    }
}

/// Fits `π` by maximizing the (penalized) Bernoulli likelihood of the mask.
pub fn fit_propensity(ds: &Dataset, selection: &FeatureSelection, regularization: Regularization) -> Result<PropensityModel> {
    fit_propensity_with(ds, selection, regularization, FitOptions::default())
}

pub fn fit_propensity_with(
    ds: &Dataset,
    selection: &FeatureSelection,
    regularization: Regularization,
    options: FitOptions,
) -> Result<PropensityModel> {
    let cov = ds.covariates();
    let (features, feature_names) = build_features(cov, selection)?;
    let x = design(&features, cov)?;
    let r = DVector::from_iterator(ds.n(), ds.mask().iter().map(|&m| m as u8 as f64));
    let observed = ds.n_observed();
    let degenerate = observed == 0 || observed == ds.n();
    let fit = match regularization {
        Regularization::None => {
            if degenerate {
                return Err(Error::Separation("every response has the same observation status".into()));
            }
            newton(&x, &r, 0.0, options, true)?
        }
        Regularization::L2(lambda) => {
            check_lambda(lambda)?;
            newton(&x, &r, lambda, options, false)?
        }
        Regularization::L1(lambda) => {
            check_lambda(lambda)?;
            if degenerate {
                return Err(Error::Separation("every response has the same observation status".into()));
            }
            proximal_l1(&x, &r, lambda, options)
        }
    };
    Ok(PropensityModel {
        beta0: fit.theta[0],
        beta: fit.theta.iter().skip(1).copied().collect(),
        feature_names,
        selection: selection.clone(),
        regularization,
        converged: fit.converged,
        iterations: fit.iterations,
        features,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("regularization strength {lambda} must be positive")))
    }
}

struct LogisticFit {
    theta: DVector<f64>,
    converged: bool,
    iterations: usize,
}

/// Negative log-likelihood plus `ridge/2·‖θ‖²`.
fn penalized_nll(x: &DMatrix<f64>, r: &DVector<f64>, theta: &DVector<f64>, ridge: f64) -> f64 {
    let eta = x * theta;
    let nll: f64 = eta.iter().zip(r.iter()).map(|(&e, &ri)| softplus(e) - ri * e).sum();
    nll + 0.5 * ridge * theta.norm_squared()
}

/// Newton–Raphson (IRLS) with step halving.
fn newton(x: &DMatrix<f64>, r: &DVector<f64>, ridge: f64, options: FitOptions, detect_separation: bool) -> Result<LogisticFit> {
    let p = x.ncols();
    let mut theta = DVector::zeros(p);
    let mut value = penalized_nll(x, r, &theta, ridge);
    for iteration in 1..=options.max_iter {
        let eta = x * &theta;
        let prob = eta.map(sigmoid);
        let grad = x.transpose() * (&prob - r) + &theta * ridge;
        let curvature = prob.map(|q| q * (1.0 - q));
        let mut hessian = x.transpose() * DMatrix::from_diagonal(&curvature) * x;
        for k in 0..p {
            hessian[(k, k)] += ridge;
        }
        let step = match linalg::solve_spd(&hessian, &grad) {
            Ok(s) => s,
            Err(_) if detect_separation => {
                return Err(Error::Separation("information matrix became singular".into()));
            }
            Err(e) => return Err(e),
        };
        let mut t = 1.0;
        let mut next = &theta - &step * t;
        let mut next_value = penalized_nll(x, r, &next, ridge);
        while next_value > value + 1e-12 * value.abs() && t > 1e-10 {
            t *= 0.5;
            next = &theta - &step * t;
            next_value = penalized_nll(x, r, &next, ridge);
        }
        if next_value > value + 1e-12 * value.abs() {
            next = theta.clone();
            next_value = value;
        }
        let change = (&next - &theta).amax();
        theta = next;
        value = next_value;
        if detect_separation && theta.amax() > 1e3 {
            return Err(Error::Separation("coefficients diverge".into()));
        }
        if change < options.tol {
            if detect_separation && (x * &theta).amax() > 30.0 {
                return Err(Error::Separation("fitted probabilities reach 0 or 1".into()));
            }
            return Ok(LogisticFit { theta, converged: true, iterations: iteration });
        }
    }
    if detect_separation {
        return Err(Error::Separation(format!("no convergence in {} iterations", options.max_iter)));
    }
    Ok(LogisticFit { theta, converged: false, iterations: options.max_iter })
}

/// Proximal gradient with backtracking for `NLL(θ) + λ‖β‖₁` (intercept free).
fn proximal_l1(x: &DMatrix<f64>, r: &DVector<f64>, lambda: f64, options: FitOptions) -> LogisticFit {
    let p = x.ncols();
    let objective = |t: &DVector<f64>| penalized_nll(x, r, t, 0.0) + lambda * t.iter().skip(1).map(|b| b.abs()).sum::<f64>();
    let gradient = |t: &DVector<f64>| x.transpose() * ((x * t).map(sigmoid) - r);
    let prox = |v: DVector<f64>, step: f64| {
        let mut out = v;
        for k in 1..out.len() {
            let b = out[k];
            out[k] = b.signum() * (b.abs() - step * lambda).max(0.0);
        }
        out
    };
    // Lipschitz constant of the NLL gradient is at most λ_max(XᵀX)/4.
    let lipschitz_bound = 0.25 * (x.transpose() * x).symmetric_eigenvalues().max().max(1e-12);
    let mut lipschitz = lipschitz_bound / 16.0;
    let mut theta = DVector::zeros(p);
    let mut value = objective(&theta);
    for iteration in 1..=options.max_iter {
        let smooth = penalized_nll(x, r, &theta, 0.0);
        let grad = gradient(&theta);
        let mut next;
        loop {
            next = prox(&theta - &grad * (1.0 / lipschitz), 1.0 / lipschitz);
            let diff = &next - &theta;
            let model = smooth + grad.dot(&diff) + 0.5 * lipschitz * diff.norm_squared();
            if penalized_nll(x, r, &next, 0.0) <= model + 1e-12 * model.abs() || lipschitz >= 4.0 * lipschitz_bound {
                break;
            }
            lipschitz *= 2.0;
        }
        let next_value = objective(&next);
        if next_value > value {
            next = theta.clone();
        } else {
            value = next_value;
        }
        let change = (&next - &theta).amax();
        theta = next;
        if change < options.tol {
            return LogisticFit { theta, converged: true, iterations: iteration };
        }
        lipschitz = (lipschitz / 1.5).max(lipschitz_bound / 1e6);
    }
    LogisticFit { theta, converged: false, iterations: options.max_iter }
}

/// How a weight vector's probabilities were produced; bootstrap replicates
/// reuse it to recompute weights on resamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightRecipe {
    /// `π̂ ≡` observed fraction.
    Mcar,
    /// Logistic model refitted on the given features.
    Logistic {
        selection: FeatureSelection,
        regularization: Regularization,
    },
    /// Probabilities supplied externally (treated as known).
    Fixed,
}

/// Inverse-probability weights: `raw_i = R_i / (n · max(π̂_i, floor))` and
/// `normalized = raw / Σ raw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Unclipped `π̂` per record.
    pub pi: Vec<f64>,
    pub clip_floor: f64,
    pub recipe: WeightRecipe,
}

impl WeightVector {
    pub fn from_probabilities(mask: &[bool], pi: Vec<f64>, clip_floor: f64, recipe: WeightRecipe) -> Result<Self> {
        if !(clip_floor > 0.0 && clip_floor <= 0.5) {
            return Err(Error::InvalidArgument(format!("clip floor {clip_floor} outside (0, 0.5]")));
        }
        if pi.len() != mask.len() {
            return Err(Error::InvalidArgument("one probability per record is required".into()));
        }
        if let Some(p) = pi.iter().find(|p| !(p.is_finite() && **p >= 0.0 && **p <= 1.0)) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
        let n = mask.len() as f64;
        let raw: Vec<f64> = mask
            .iter()
            .zip(&pi)
            .map(|(&m, &p)| if m { 1.0 / (n * p.max(clip_floor)) } else { 0.0 })
            .collect();
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::Insufficient("no observed responses: weights sum to zero".into()));
        }
        let normalized = raw.iter().map(|w| w / total).collect();
        Ok(Self { raw, normalized, pi, clip_floor, recipe })
    }

    pub fn n(&self) -> usize {
        self.raw.len()
    }

    /// `R_i / π̂_i` (clipped): the raw weight rescaled by `n`.
    pub fn unit(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.raw.iter().map(|w| w * n).collect()
    }

    /// Weights for the resample `indices` of `ds`. With `refit` the recipe
    /// is re-estimated on the resample; otherwise the original `π̂` of each
    /// drawn record is reused.
    pub fn for_resample(&self, ds: &Dataset, indices: &[usize], refit: bool) -> Result<Self> {
        let mask: Vec<bool> = indices.iter().map(|&i| ds.mask()[i]).collect();
        let reuse = || -> Vec<f64> { indices.iter().map(|&i| self.pi[i]).collect() };
        let pi = match (&self.recipe, refit) {
            (WeightRecipe::Fixed, _) | (_, false) => reuse(),
            (WeightRecipe::Mcar, true) => {
                let frac = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
                vec![frac; mask.len()]
            }
            (WeightRecipe::Logistic { selection, regularization }, true) => {
                let sub = ds.subset(indices);
                fit_propensity(&sub, selection, *regularization)?.predict(sub.covariates())?
            }
        };
        Self::from_probabilities(&mask, pi, self.clip_floor, self.recipe.clone())
    }
}

/// Weights from a fitted propensity model.
pub fn compute_weights(ds: &Dataset, model: &PropensityModel, clip_floor: f64) -> Result<WeightVector> {
    let pi = model.predict(ds.covariates())?;
    WeightVector::from_probabilities(
        ds.mask(),
        pi,
        clip_floor,
        WeightRecipe::Logistic {
            selection: model.selection.clone(),
            regularization: model.regularization,
        },
    )
}

/// Weights under `π̂ ≡` observed fraction.
pub fn mcar_weights(ds: &Dataset) -> Result<WeightVector> {
    mcar_weights_with_floor(ds, DEFAULT_CLIP_FLOOR)
}

pub fn mcar_weights_with_floor(ds: &Dataset, clip_floor: f64) -> Result<WeightVector> {
    let observed = ds.n_observed();
    if observed == 0 {
        return Err(Error::Insufficient("no observed responses".into()));
    }
    let frac = observed as f64 / ds.n() as f64;
    WeightVector::from_probabilities(ds.mask(), vec![frac; ds.n()], clip_floor, WeightRecipe::Mcar)
}

/// Weights from externally known probabilities.
pub fn fixed_weights(ds: &Dataset, pi: Vec<f64>, clip_floor: f64) -> Result<WeightVector> {
    WeightVector::from_probabilities(ds.mask(), pi, clip_floor, WeightRecipe::Fixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(x: &[f64], mask: &[bool]) -> Dataset {
        let cov = Covariates::from_numeric_columns(vec!["x".into()], &[x.to_vec()]).unwrap();
        let ids = (0..x.len()).map(|i| i.to_string()).collect();
        let y = mask.iter().map(|&m| m.then_some(1.0)).collect();
        Dataset::new(ids, cov, y).unwrap()
    }

    #[test]
    fn intercept_only_is_sample_log_odds() {
        let mask: Vec<bool> = (0..10).map(|i| i < 6).collect();
        let ds = dataset(&(0..10).map(|i| i as f64).collect::<Vec<_>>(), &mask);
        let m = fit_propensity(&ds, &FeatureSelection::intercept_only(), Regularization::None).unwrap();
        assert!((m.beta0 - (0.6f64 / 0.4).ln()).abs() < 1e-10);
        assert!((m.beta0 - 0.4055).abs() < 1e-4);
        assert!(m.converged);
    }

    #[test]
    fn all_observed_with_ridge_is_finite() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 10.0 - 1.0).collect();
        let ds = dataset(&x, &[true; 20]);
        let sel = FeatureSelection::all(ds.covariates());
        let m = fit_propensity(&ds, &sel, Regularization::L2(1.0)).unwrap();
        assert!(m.beta0.is_finite() && m.beta.iter().all(|b| b.is_finite()));
        assert!(m.predict(ds.covariates()).unwrap().iter().all(|&p| p > 0.5));
        assert!(matches!(
            fit_propensity(&ds, &sel, Regularization::None),
            Err(Error::Separation(_))
        ));
    }

    #[test]
    fn separable_data_needs_regularization() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mask: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let ds = dataset(&x, &mask);
        let sel = FeatureSelection::all(ds.covariates());
        let err = fit_propensity(&ds, &sel, Regularization::None).unwrap_err();
        assert!(err.to_string().contains("L2"));
        assert!(fit_propensity(&ds, &sel, Regularization::L2(0.5)).is_ok());
    }

    fn logistic_sample(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let mask: Vec<bool> = x.iter().map(|&v| rng.random::<f64>() < sigmoid(v)).collect();
        // Keep the raw scale: bypass standardization by building covariates directly.
        dataset(&x, &mask)
    }

    fn loglik(ds: &Dataset, b0: f64, b1: f64) -> f64 {
        let x = ds.covariates().numeric_column(0);
        x.iter()
            .zip(ds.mask())
            .map(|(&v, &m)| {
                let eta = b0 + b1 * v;
                if m { -softplus(-eta) } else { -softplus(eta) }
            })
            .sum()
    }

    #[test]
    fn irls_matches_grid_maximization() {
        let ds = logistic_sample(300, 11);
        let model = fit_propensity(&ds, &FeatureSelection::all(ds.covariates()), Regularization::None).unwrap();
        // Zooming grid search on (β0, β1).
        let (mut c0, mut c1, mut half) = (0.0, 0.0, 4.0);
        for _ in 0..40 {
            let mut best = (f64::NEG_INFINITY, c0, c1);
            for a in 0..=20 {
                for b in 0..=20 {
                    let b0 = c0 - half + half * a as f64 / 10.0;
                    let b1 = c1 - half + half * b as f64 / 10.0;
                    let l = loglik(&ds, b0, b1);
                    if l > best.0 {
                        best = (l, b0, b1);
                    }
                }
            }
            c0 = best.1;
            c1 = best.2;
            half *= 0.5;
        }
        assert!((model.beta0 - c0).abs() < 1e-4, "{} vs {c0}", model.beta0);
        assert!((model.beta[0] - c1).abs() < 1e-4, "{} vs {c1}", model.beta[0]);
    }

    #[test]
    fn recovers_generating_parameters() {
        let ds = logistic_sample(5000, 5);
        let m = fit_propensity(&ds, &FeatureSelection::all(ds.covariates()), Regularization::None).unwrap();
        assert!(m.beta0.abs() < 0.1, "{}", m.beta0);
        assert!((m.beta[0] - 1.0).abs() < 0.1, "{}", m.beta[0]);
    }

    #[test]
    fn lasso_shrinks_to_zero_for_large_penalty() {
        let ds = logistic_sample(400, 2);
        let sel = FeatureSelection::all(ds.covariates());
        let m = fit_propensity(&ds, &sel, Regularization::L1(1e4)).unwrap();
        assert_eq!(m.beta[0], 0.0);
        let frac = ds.n_observed() as f64 / 400.0;
        assert!((m.beta0 - (frac / (1.0 - frac)).ln()).abs() < 1e-4);
        let light = fit_propensity_with(&ds, &sel, Regularization::L1(1e-3), FitOptions { max_iter: 5000, tol: 1e-10 }).unwrap();
        let plain = fit_propensity(&ds, &sel, Regularization::None).unwrap();
        assert!((light.beta[0] - plain.beta[0]).abs() < 1e-3);
    }

    #[test]
    fn categorical_and_gluco_features() {
        let mut cov = Covariates::from_numeric_columns(vec!["x".into()], &[vec![0.1, -0.3, 0.5, 1.0, -1.0, 0.2]]).unwrap();
        cov.push_categorical("s".into(), &[0, 1, 2, 0, 1, 2], 3).unwrap();
        cov.set_distributional(
            (0..6)
                .map(|i| Some(crate::data::QuantileFunction::on_uniform_grid(vec![i as f64, 2.0 * i as f64 + 1.0]).unwrap()))
                .collect(),
        )
        .unwrap();
        let ds = Dataset::new(
            (0..6).map(|i| i.to_string()).collect(),
            cov,
            vec![Some(1.0), None, Some(1.0), None, Some(2.0), Some(0.0)],
        )
        .unwrap();
        let sel = FeatureSelection::all(ds.covariates());
        let m = fit_propensity(&ds, &sel, Regularization::L2(1.0)).unwrap();
        assert_eq!(m.feature_names, vec!["x", "s=1", "s=2", "gluco_mean", "gluco_sd"]);
        let pi = m.predict(ds.covariates()).unwrap();
        for (i, p) in pi.iter().enumerate() {
            assert!((p - m.predict_one(ds.covariates(), i).unwrap()).abs() < 1e-14);
        }
        let json = serde_json::to_string(&m).unwrap();
        let back: PropensityModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.predict(ds.covariates()).unwrap(), pi);
    }

    #[test]
    fn weights_with_unit_propensity() {
        let ds = dataset(&[0.0, 1.0, 2.0, 3.0], &[true; 4]);
        let w = fixed_weights(&ds, vec![1.0; 4], DEFAULT_CLIP_FLOOR).unwrap();
        assert_eq!(w.raw, vec![0.25; 4]);
        assert_eq!(w.normalized, vec![0.25; 4]);
    }

    #[test]
    fn weights_zero_for_unobserved() {
        let ds = dataset(&[0.0, 1.0], &[true, false]);
        let w = fixed_weights(&ds, vec![0.5, 0.9], DEFAULT_CLIP_FLOOR).unwrap();
        assert_eq!(w.raw, vec![1.0, 0.0]);
        assert_eq!(w.normalized, vec![1.0, 0.0]);
    }

    #[test]
    fn small_propensity_is_clipped() {
        let ds = dataset(&[0.0, 1.0], &[true, true]);
        let w = fixed_weights(&ds, vec![0.001, 0.5], 0.01).unwrap();
        assert!((w.raw[0] - 1.0 / (2.0 * 0.01)).abs() < 1e-12);
        assert!(fixed_weights(&ds, vec![0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn no_observed_response_is_an_error() {
        let ds = dataset(&[0.0, 1.0], &[false, false]);
        assert!(fixed_weights(&ds, vec![0.5, 0.5], 0.01).is_err());
        assert!(mcar_weights(&ds).is_err());
    }

    #[test]
    fn mcar_examples() {
        let ds = dataset(&[0.0, 1.0, 2.0], &[true; 3]);
        let w = mcar_weights(&ds).unwrap();
        assert!(w.normalized.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let ds = dataset(&[0.0, 1.0, 2.0, 3.0], &[true, true, false, false]);
        assert_eq!(mcar_weights(&ds).unwrap().normalized, vec![0.5, 0.5, 0.0, 0.0]);
        let mask: Vec<bool> = (0..10).map(|i| i == 3).collect();
        let ds = dataset(&(0..10).map(|i| i as f64).collect::<Vec<_>>(), &mask);
        assert_eq!(mcar_weights(&ds).unwrap().normalized[3], 1.0);
    }

    #[test]
    fn resample_weights_reuse_or_refit() {
        let ds = dataset(&[0.0, 1.0, 2.0, 3.0], &[true, false, true, true]);
        let w = fixed_weights(&ds, vec![0.5, 0.5, 0.25, 1.0], 0.01).unwrap();
        let r = w.for_resample(&ds, &[2, 2, 1, 0], true).unwrap();
        assert_eq!(r.pi, vec![0.25, 0.25, 0.5, 0.5]);
        let m = mcar_weights(&ds).unwrap().for_resample(&ds, &[1, 1, 0, 3], true).unwrap();
        assert_eq!(m.pi, vec![0.5; 4]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lowering_floor_never_decreases_weights(
                pi in prop::collection::vec(0.0f64..1.0, 2..30),
                hi in 0.02f64..0.5,
                frac in 0.0f64..1.0,
            ) {
                let mask: Vec<bool> = (0..pi.len()).map(|i| i % 3 != 1).collect();
                let lo = hi * frac.max(1e-3);
                let a = WeightVector::from_probabilities(&mask, pi.clone(), hi, WeightRecipe::Fixed).unwrap();
                let b = WeightVector::from_probabilities(&mask, pi, lo, WeightRecipe::Fixed).unwrap();
                prop_assert!(a.raw.iter().zip(&b.raw).all(|(x, y)| y >= x));
                let s: f64 = b.normalized.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
