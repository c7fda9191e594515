//! Weighted HSIC and its bootstrap-calibrated independence test.
//!
//! With normalized weights `w` (zero for unobserved responses) the statistic
//! is the squared RKHS distance between the weighted joint embedding and the
//! product of the weighted marginal embeddings:
//!
//! ```text
//! T1 = Σ_ij w_i w_j Kx_ij Ky_ij
//! T2 = (wᵀ Kx w)(wᵀ Ky w)
//! T3 = Σ_ijk w_i w_j w_k Kx_ij Ky_ik = Σ_i w_i (Kx w)_i (Ky w)_i
//! HSIC = T1 + T2 − 2·T3
//! ```

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Covariates, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{self, BaseBandwidths, DistanceMatrices, KernelSpec};
use crate::propensity::{WeightRecipe, WeightVector};

const NORMALIZATION_TOL: f64 = 1e-10;
/// Redraws allowed for a bootstrap resample without observed responses.
const MAX_REDRAWS: usize = 10;

fn check_inputs(kx: &DMatrix<f64>, ky: &DMatrix<f64>, w: &[f64]) -> Result<()> {
    let n = w.len();
    if kx.shape() != (n, n) || ky.shape() != (n, n) {
        return Err(Error::InvalidArgument(format!(
            "kernel matrices {:?} and {:?} do not match {n} weights",
            kx.shape(),
            ky.shape()
        )));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL || w.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(format!("weights must be nonnegative and sum to 1 (sum = {total})")));
    }
    Ok(())
}

/// Weighted HSIC in `O(n²)`.
pub fn hsic_statistic(kx: &DMatrix<f64>, ky: &DMatrix<f64>, w: &[f64]) -> Result<f64> {
    check_inputs(kx, ky, w)?;
    let w = DVector::from_column_slice(w);
    let kxw = kx * &w;
    let kyw = ky * &w;
    let t1 = kx.component_mul(ky).dot(&(&w * w.transpose()));
    let t2 = w.dot(&kxw) * w.dot(&kyw);
    let t3: f64 = (0..w.len()).map(|i| w[i] * kxw[i] * kyw[i]).sum();
    Ok(t1 + t2 - 2.0 * t3)
}

/// Squared norm of the centered bootstrap element
/// `(φ_XY − φ*_XY) + (φ*_X ⊗ φ*_Y − φ_X ⊗ φ_Y)`, where the resample weights
/// `v` have been aggregated onto the original indices (a drawn record has
/// the same kernel sections as its original).
fn centered_replicate(kx: &DMatrix<f64>, ky: &DMatrix<f64>, hadamard: &DMatrix<f64>, w: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let u = w - v;
    let (kxp, kyp) = (kx * v, ky * v);
    let (kxq, kyq) = (kx * w, ky * w);
    let joint = u.dot(&(hadamard * &u));
    let pp = v.dot(&kxp) * v.dot(&kyp);
    let qq = w.dot(&kxq) * w.dot(&kyq);
    let pq = v.dot(&kxq) * v.dot(&kyq);
    let up: f64 = (0..u.len()).map(|i| u[i] * kxp[i] * kyp[i]).sum();
    let uq: f64 = (0..u.len()).map(|i| u[i] * kxq[i] * kyq[i]).sum();
    joint + pp + qq + 2.0 * up - 2.0 * uq - 2.0 * pq
}

/// `#{replicates ≥ statistic} / m`.
pub fn p_value(statistic: f64, replicates: &[f64]) -> f64 {
    if replicates.is_empty() {
        return 1.0;
    }
    replicates.iter().filter(|&&r| r >= statistic).count() as f64 / replicates.len() as f64
}

/// Gaussian kernel on the response with the median heuristic over observed
/// pairs, each pair carrying mass `w_i·w_j`.
pub fn response_kernel_spec(ds: &Dataset, w: &[f64]) -> Result<KernelSpec> {
    let obs = ds.observed_indices();
    if obs.len() < 2 {
        return Err(Error::Insufficient("at least 2 observed responses are required".into()));
    }
    let mut dist = Vec::with_capacity(obs.len() * (obs.len() - 1) / 2);
    let mut mass = Vec::with_capacity(dist.capacity());
    for (a, &i) in obs.iter().enumerate() {
        for &j in &obs[a + 1..] {
            let d = ds.response(i)? - ds.response(j)?;
            dist.push(d * d);
            mass.push(w[i] * w[j]);
        }
    }
    let sigma = if mass.iter().any(|&m| m > 0.0) {
        kernels::median_heuristic(&dist, Some(&mass))?
    } else {
        kernels::median_heuristic(&dist, None)?
    };
    Ok(KernelSpec::numeric(sigma))
}

/// Default covariate kernel: per-source median heuristic over all records,
/// equal simplex weight on informative sources.
pub fn covariate_kernel_spec(ds: &Dataset) -> Result<KernelSpec> {
    BaseBandwidths::from_distances(&DistanceMatrices::within(ds.covariates()), None)?.balanced_spec()
}

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Re-estimate the propensity on each resample (otherwise the original
    /// `π̂` of every drawn record is reused, the known-`π` regime).
    pub refit_propensity: bool,
}

impl BootstrapOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self { replicates, seed, refit_propensity: true }
    }
}

/// Outcome of [`bootstrap_test`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsicResult {
    pub statistic: f64,
    pub p_value: f64,
    pub m: usize,
    pub seed: u64,
    pub refit_propensity: bool,
    pub spec_x: KernelSpec,
    pub spec_y: KernelSpec,
    pub weights_recipe: WeightRecipe,
    pub replicates: Vec<f64>,
}

/// Tests `H0: X ⟂ Y` with the weighted HSIC and `m` centered bootstrap replicates.
///
/// Replicate `j` draws from its own RNG stream `(seed, j)`, so results do not
/// depend on scheduling.
pub fn bootstrap_test(
    ds: &Dataset,
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    weights: &WeightVector,
    options: BootstrapOptions,
) -> Result<HsicResult> {
    bootstrap_test_on(ds, ds.covariates(), spec_x, spec_y, weights, options)
}

/// [`bootstrap_test`] with the X kernel evaluated on `x` (e.g. one covariate
/// of `ds`) while the propensity refit still sees all of `ds`.
pub fn bootstrap_test_on(
    ds: &Dataset,
    x: &Covariates,
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    weights: &WeightVector,
    options: BootstrapOptions,
) -> Result<HsicResult> {
    let n = ds.n();
    if x.n() != n {
        return Err(Error::InvalidArgument("covariate block length differs from n".into()));
    }
    if options.replicates < 99 {
        return Err(Error::InvalidArgument(format!("{} bootstrap replicates; at least 99 required", options.replicates)));
    }
    if ds.n_observed() < 2 {
        return Err(Error::Insufficient("at least 2 observed responses are required".into()));
    }
    if weights.n() != n {
        return Err(Error::InvalidArgument("weight vector length differs from n".into()));
    }
    let kx = kernels::gram(x, spec_x)?.values;
    let ky = kernels::gram(&kernels::response_covariates(ds), spec_y)?.values;
    let statistic = hsic_statistic(&kx, &ky, &weights.normalized)?;
    let hadamard = kx.component_mul(&ky);
    let w = DVector::from_column_slice(&weights.normalized);

    let replicates = (0..options.replicates)
        .into_par_iter()
        .map(|j| {
            let v = resample_weights(ds, weights, options, j as u64)?;
            Ok(centered_replicate(&kx, &ky, &hadamard, &w, &v))
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(HsicResult {
        statistic,
        p_value: p_value(statistic, &replicates),
        m: options.replicates,
        seed: options.seed,
        refit_propensity: options.refit_propensity,
        spec_x: *spec_x,
        spec_y: *spec_y,
        weights_recipe: weights.recipe.clone(),
        replicates,
    })
}

/// Normalized weights of resample `stream`, aggregated onto original indices.
fn resample_weights(ds: &Dataset, weights: &WeightVector, options: BootstrapOptions, stream: u64) -> Result<DVector<f64>> {
    let n = ds.n();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(stream);
    let mut last_err = None;
    for _ in 0..MAX_REDRAWS {
        let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        if !indices.iter().any(|&i| ds.is_observed(i)) {
            last_err = Some(Error::Insufficient(format!("bootstrap resample {stream} has no observed response")));
            continue;
        }
        match weights.for_resample(ds, &indices, options.refit_propensity) {
            Ok(rw) => {
                let mut v = DVector::zeros(n);
                for (k, &i) in indices.iter().enumerate() {
                    v[i] += rw.normalized[k];
                }
                return Ok(v);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one draw was attempted"))
}
