//! Synthetic designs with known regression function and observation
//! probabilities, plus slow reference implementations used as test oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{uniform_grid, Dataset, QuantileFunction, RawCategorical};
use crate::error::{Error, Result};

/// Regression function catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    /// `intercept + Σ_l β_l x_l` (missing coefficients are zero).
    Linear {
        #[serde(default)]
        intercept: f64,
        coefficients: Vec<f64>,
    },
    /// `2 sin(x1) + (x2² − 1) + |x3|` over the first (up to) three numerics.
    AdditiveNonlinear,
    /// `x1·x2`, plus a shift of 1 for category level 1 of the first categorical.
    Interaction,
    /// `2·mean(Q) + 0.5·x1` where `Q` is the record's quantile function.
    QuantileSignal,
}

/// Observation mechanism `π(x) = P(R = 1 | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    Mcar { p: f64 },
    /// `σ(β0 + Σ_l β_l x_l)` over numeric covariates.
    MarLogistic { beta0: f64, beta: Vec<f64> },
    /// `σ(intercept + slope·x1)` with `x1` an age-like covariate; a negative
    /// slope makes older records less likely to be observed.
    MnarAgeLike { intercept: f64, slope: f64 },
}

fn default_levels() -> u32 {
    3
}

fn default_grid_size() -> usize {
    50
}

/// A complete synthetic design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p_num: usize,
    #[serde(default)]
    pub p_cat: usize,
    #[serde(default = "default_levels")]
    pub n_levels: u32,
    pub signal: Signal,
    pub noise_sd: f64,
    pub mechanism: Mechanism,
    /// Attach a per-record Gaussian quantile function.
    #[serde(default)]
    pub distributional: bool,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    pub seed: u64,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return bad("noise_sd must be finite and nonnegative");
        }
        if self.p_cat > 0 && self.n_levels < 2 {
            return bad("categorical covariates need at least 2 levels");
        }
        if self.distributional && self.grid_size < 2 {
            return bad("grid_size must be at least 2");
        }
        match &self.signal {
            Signal::Linear { coefficients, intercept } => {
                if coefficients.len() > self.p_num {
                    return bad("more linear coefficients than numeric covariates");
                }
                if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
                    return bad("linear signal parameters must be finite");
                }
            }
            Signal::AdditiveNonlinear if self.p_num == 0 => return bad("additive signal needs numeric covariates"),
            Signal::Interaction if self.p_num < 2 => return bad("interaction signal needs 2 numeric covariates"),
            Signal::QuantileSignal if !self.distributional => {
                return bad("quantile signal needs distributional = true")
            }
            _ => {}
        }
        match &self.mechanism {
            Mechanism::Mcar { p } if !(*p > 0.0 && *p <= 1.0) => bad("mcar p must lie in (0, 1]"),
            Mechanism::MarLogistic { beta, beta0 } => {
                if beta.len() > self.p_num {
                    bad("more propensity coefficients than numeric covariates")
                } else if !beta0.is_finite() || beta.iter().any(|b| !b.is_finite()) {
                    bad("propensity coefficients must be finite")
                } else {
                    Ok(())
                }
            }
            Mechanism::MnarAgeLike { intercept, slope } => {
                if self.p_num == 0 {
                    bad("the age-like mechanism needs a numeric covariate")
                } else if !intercept.is_finite() || !slope.is_finite() {
                    bad("mechanism parameters must be finite")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    /// `m(X_i)`.
    pub m: Vec<f64>,
    /// `π(X_i)`.
    pub pi: Vec<f64>,
    /// Covariates the signal depends on.
    pub active: Vec<String>,
    /// Full responses, including the ones masked out.
    pub y_full: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn numeric_name(l: usize) -> String {
    format!("x{}", l + 1)
}

fn categorical_name(l: usize) -> String {
    format!("c{}", l + 1)
}

/// Draws replicate 0 of `design`.
pub fn generate(design: &SimDesign) -> Result<(Dataset, SimTruth)> {
    generate_replicate(design, 0)
}

/// Draws replicate `stream` of `design` from the RNG substream `(seed, stream)`.
pub fn generate_replicate(design: &SimDesign, stream: u64) -> Result<(Dataset, SimTruth)> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    rng.set_stream(stream);
    let n = design.n;

    let numeric: Vec<Vec<f64>> = (0..design.p_num)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let categorical: Vec<Vec<u32>> = (0..design.p_cat)
        .map(|_| (0..n).map(|_| rng.random_range(0..design.n_levels)).collect())
        .collect();
    let (quantiles, qmeans) = if design.distributional {
        let grid = uniform_grid(design.grid_size);
        let z: Vec<f64> = grid
            .iter()
            .map(|&p| Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p))
            .collect();
        let mut qs = Vec::with_capacity(n);
        let mut means = Vec::with_capacity(n);
        for _ in 0..n {
            let mu: f64 = rng.sample(StandardNormal);
            let log_sd: f64 = rng.sample(StandardNormal);
            let sd = (0.25 * log_sd).exp();
            let q = QuantileFunction::new(grid.clone(), z.iter().map(|&v| mu + sd * v).collect())?;
            means.push(q.mean());
            qs.push(Some(q));
        }
        (Some(qs), means)
    } else {
        (None, Vec::new())
    };

    let (m, active) = signal_values(design, &numeric, &categorical, &qmeans);
    let y_full: Vec<f64> = m
        .iter()
        .map(|&mi| mi + design.noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let pi: Vec<f64> = (0..n)
        .map(|i| match &design.mechanism {
            Mechanism::Mcar { p } => *p,
            Mechanism::MarLogistic { beta0, beta } => {
                sigmoid(beta0 + beta.iter().enumerate().map(|(l, b)| b * numeric[l][i]).sum::<f64>())
            }
            Mechanism::MnarAgeLike { intercept, slope } => sigmoid(intercept + slope * numeric[0][i]),
        })
        .collect();
    let mask: Vec<bool> = pi.iter().map(|&p| rng.random::<f64>() < p).collect();

    let ids = (0..n).map(|i| format!("s{:05}", i + 1)).collect();
    let numeric_cols = numeric.iter().enumerate().map(|(l, c)| (numeric_name(l), c.clone())).collect();
    let categorical_cols = categorical
        .iter()
        .enumerate()
        .map(|(l, c)| RawCategorical {
            name: categorical_name(l),
            labels: c.iter().map(|v| format!("L{v}")).collect(),
        })
        .collect();
    let response = y_full.iter().zip(&mask).map(|(&y, &r)| r.then_some(y)).collect();
    let ds = Dataset::from_raw(ids, numeric_cols, categorical_cols, quantiles, "y", response, None)?;
    Ok((ds, SimTruth { m, pi, active, y_full }))
}

fn signal_values(design: &SimDesign, x: &[Vec<f64>], c: &[Vec<u32>], qmeans: &[f64]) -> (Vec<f64>, Vec<String>) {
    let n = design.n;
    match &design.signal {
        Signal::Linear { intercept, coefficients } => {
            let m = (0..n)
                .map(|i| intercept + coefficients.iter().enumerate().map(|(l, b)| b * x[l][i]).sum::<f64>())
                .collect();
            let active = coefficients
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(l, _)| numeric_name(l))
                .collect();
            (m, active)
        }
        Signal::AdditiveNonlinear => {
            let k = design.p_num.min(3);
            let f: [fn(f64) -> f64; 3] = [|v| 2.0 * v.sin(), |v| v * v - 1.0, f64::abs];
            let m = (0..n).map(|i| (0..k).map(|l| f[l](x[l][i])).sum()).collect();
            (m, (0..k).map(numeric_name).collect())
        }
        Signal::Interaction => {
            let shift = |i: usize| if design.p_cat > 0 && c[0][i] == 1 { 1.0 } else { 0.0 };
            let m = (0..n).map(|i| x[0][i] * x[1][i] + shift(i)).collect();
            let mut active = vec![numeric_name(0), numeric_name(1)];
            if design.p_cat > 0 {
                active.push(categorical_name(0));
            }
            (m, active)
        }
        Signal::QuantileSignal => {
            let lin = |i: usize| if design.p_num > 0 { 0.5 * x[0][i] } else { 0.0 };
            let m = (0..n).map(|i| 2.0 * qmeans[i] + lin(i)).collect();
            let mut active = vec![crate::propensity::GLUCO.to_string()];
            if design.p_num > 0 {
                active.push(numeric_name(0));
            }
            (m, active)
        }
    }
}

/// Slow reference implementations.
pub mod oracle {
    use nalgebra::{DMatrix, DVector};

    use crate::data::Dataset;
    use crate::error::{Error, Result};
    use crate::kernels::{self, KernelSpec};
    use crate::krr::{KrrModel, Mode, ResponseScale};
    use crate::propensity::WeightVector;

    const MAX_N: usize = 30;

    fn guard(n: usize) -> Result<()> {
        if n > MAX_N {
            Err(Error::InvalidArgument(format!("brute-force oracle limited to n ≤ {MAX_N}, got {n}")))
        } else {
            Ok(())
        }
    }

    /// Literal triple-sum evaluation of the weighted HSIC.
    pub fn hsic_bruteforce(kx: &DMatrix<f64>, ky: &DMatrix<f64>, w: &[f64]) -> Result<f64> {
        let n = w.len();
        guard(n)?;
        if kx.shape() != (n, n) || ky.shape() != (n, n) {
            return Err(Error::InvalidArgument("kernel matrices must be n×n".into()));
        }
        let mut t1 = 0.0;
        let (mut sx, mut sy) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                t1 += w[i] * w[j] * kx[(i, j)] * ky[(i, j)];
                sx += w[i] * w[j] * kx[(i, j)];
                sy += w[i] * w[j] * ky[(i, j)];
            }
        }
        let mut t3 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t3 += w[i] * w[j] * w[k] * kx[(i, j)] * ky[(i, k)];
                }
            }
        }
        Ok(t1 + sx * sy - 2.0 * t3)
    }

    /// Leave-one-out residuals by refitting without each observed record,
    /// on the standardized response scale of the full data.
    pub fn loo_bruteforce(
        ds: &Dataset,
        spec: &KernelSpec,
        w: &WeightVector,
        lambda: f64,
        mode: Mode,
        imputer: Option<&KrrModel>,
    ) -> Result<Vec<(usize, f64)>> {
        let n = ds.n();
        guard(n)?;
        let k = kernels::gram(ds.covariates(), spec)?.values;
        let imputed = match (imputer, mode) {
            (Some(m), Mode::DoublyRobust) => Some(m.predict(ds.covariates())?),
            (None, Mode::DoublyRobust) => {
                return Err(Error::InvalidArgument("doubly robust mode requires an imputer".into()))
            }
            _ => None,
        };
        let scale = match &imputed {
            Some(m) => ResponseScale::doubly_robust(ds, w, m)?,
            None => ResponseScale::weighted(ds, &w.normalized)?,
        };
        let y: Vec<f64> = ds.response_or(scale.mean).iter().map(|&v| scale.standardize(v)).collect();
        let mu: Vec<f64> = match &imputed {
            Some(m) => m.iter().map(|&v| scale.standardize(v)).collect(),
            None => vec![0.0; n],
        };
        let unit = w.unit();
        let mut out = Vec::new();
        for i in ds.observed_indices() {
            let keep: Vec<usize> = match mode {
                Mode::CompleteCase => ds.observed_indices().into_iter().filter(|&j| j != i).collect(),
                _ => (0..n).filter(|&j| j != i).collect(),
            };
            let m = keep.len();
            let kk = DMatrix::from_fn(m, m, |a, b| k[(keep[a], keep[b])]);
            let (lhs, rhs) = match mode {
                Mode::Ipw => {
                    let wk = DMatrix::from_fn(m, m, |a, b| w.raw[keep[a]] * kk[(a, b)]);
                    let rhs = DVector::from_fn(m, |a, _| w.raw[keep[a]] * y[keep[a]]);
                    (wk + DMatrix::identity(m, m) * lambda, rhs)
                }
                Mode::DoublyRobust => {
                    let rhs = DVector::from_fn(m, |a, _| {
                        let j = keep[a];
                        if ds.is_observed(j) { unit[j] * y[j] + (1.0 - unit[j]) * mu[j] } else { mu[j] }
                    });
                    (kk.clone() + DMatrix::identity(m, m) * lambda, rhs)
                }
                Mode::CompleteCase => {
                    let rhs = DVector::from_fn(m, |a, _| y[keep[a]]);
                    (kk.clone() + DMatrix::identity(m, m) * lambda, rhs)
                }
            };
            let alpha = lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular { pivot: 0.0 })?;
            let pred: f64 = (0..m).map(|a| k[(i, keep[a])] * alpha[a]).sum();
            out.push((i, y[i] - pred));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::krr::Mode;
    use crate::propensity::mcar_weights;
    use nalgebra::DMatrix;

    fn design(signal: Signal, mechanism: Mechanism, n: usize) -> SimDesign {
        SimDesign {
            n,
            p_num: 3,
            p_cat: 1,
            n_levels: 3,
            signal,
            noise_sd: 0.0,
            mechanism,
            distributional: false,
            grid_size: 20,
            seed: 42,
        }
    }

    #[test]
    fn noiseless_linear_fully_observed() {
        let d = design(
            Signal::Linear { intercept: 1.0, coefficients: vec![2.0, -1.0] },
            Mechanism::Mcar { p: 1.0 },
            50,
        );
        let (ds, truth) = generate(&d).unwrap();
        assert_eq!(ds.n_observed(), 50);
        for i in 0..50 {
            let lin = 1.0 + 2.0 * ds.raw_numeric(i, 0) - ds.raw_numeric(i, 1);
            assert!((ds.response(i).unwrap() - lin).abs() < 1e-9);
            assert_eq!(truth.m[i], truth.y_full[i]);
        }
        assert_eq!(truth.active, vec!["x1", "x2"]);
    }

    #[test]
    fn mcar_fraction_concentrates() {
        let d = design(Signal::AdditiveNonlinear, Mechanism::Mcar { p: 0.6 }, 10_000);
        let (ds, _) = generate(&d).unwrap();
        let frac = ds.n_observed() as f64 / 10_000.0;
        assert!((frac - 0.6).abs() < 0.02, "{frac}");
    }

    #[test]
    fn age_like_mechanism_penalizes_large_values() {
        let d = design(Signal::AdditiveNonlinear, Mechanism::MnarAgeLike { intercept: 0.5, slope: -1.0 }, 2000);
        let (ds, truth) = generate(&d).unwrap();
        let x: Vec<f64> = (0..ds.n()).map(|i| ds.raw_numeric(i, 0)).collect();
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let mp = truth.pi.iter().sum::<f64>() / x.len() as f64;
        let cov: f64 = x.iter().zip(&truth.pi).map(|(a, b)| (a - mx) * (b - mp)).sum();
        assert!(cov < 0.0);
        assert!(truth.pi.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn generation_is_deterministic_and_streams_differ() {
        let mut d = design(Signal::Interaction, Mechanism::Mcar { p: 0.7 }, 40);
        d.distributional = true;
        let a = generate(&d).unwrap();
        let b = generate(&d).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate_replicate(&d, 1).unwrap();
        assert_ne!(a.1.y_full, c.1.y_full);
    }

    #[test]
    fn quantile_signal_uses_record_means() {
        let mut d = design(Signal::QuantileSignal, Mechanism::Mcar { p: 1.0 }, 30);
        d.distributional = true;
        let (ds, truth) = generate(&d).unwrap();
        for i in 0..30 {
            let q = ds.covariates().quantile(i).unwrap();
            let expected = 2.0 * q.mean() + 0.5 * ds.raw_numeric(i, 0);
            assert!((truth.m[i] - expected).abs() < 1e-9);
        }
        d.distributional = false;
        assert!(generate(&d).is_err());
    }

    #[test]
    fn bruteforce_hsic_by_hand_at_n2() {
        let e = (-1.0f64).exp();
        let k = DMatrix::from_row_slice(2, 2, &[1.0, e, e, 1.0]);
        let w = [0.5, 0.5];
        // T1 = (2 + 2e²)/4, T2 = ((2 + 2e)/4)², T3 = (1 + e)²/4.
        let t1 = (2.0 + 2.0 * e * e) / 4.0;
        let t2 = ((2.0 + 2.0 * e) / 4.0).powi(2);
        let t3 = (1.0 + e).powi(2) / 4.0;
        let v = hsic_bruteforce(&k, &k, &w).unwrap();
        assert!((v - (t1 + t2 - 2.0 * t3)).abs() < 1e-15);
        assert!(hsic_bruteforce(&k, &DMatrix::from_element(2, 2, 1.0), &w).unwrap().abs() < 1e-15);
        assert!(hsic_bruteforce(&DMatrix::zeros(31, 31), &DMatrix::zeros(31, 31), &[0.0; 31]).is_err());
    }

    #[test]
    fn bruteforce_loo_symmetry_and_null_limit() {
        let cov = crate::data::Covariates::from_numeric_columns(vec!["x".into()], &[vec![-1.0, 1.0]]).unwrap();
        let ds = Dataset::new(vec!["a".into(), "b".into()], cov, vec![Some(-2.0), Some(2.0)]).unwrap();
        let w = mcar_weights(&ds).unwrap();
        let spec = KernelSpec::numeric(1.0);
        let r = loo_bruteforce(&ds, &spec, &w, 0.1, Mode::CompleteCase, None).unwrap();
        assert!((r[0].1 + r[1].1).abs() < 1e-12);
        let r = loo_bruteforce(&ds, &spec, &w, 1e12, Mode::Ipw, None).unwrap();
        // Standardized responses are ∓1.
        assert!((r[0].1 + 1.0).abs() < 1e-6 && (r[1].1 - 1.0).abs() < 1e-6);
    }
}
