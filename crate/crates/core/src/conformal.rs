//! Split conformal intervals with inverse-probability weighted residuals.
//!
//! The regression function and the observation probabilities are fitted on
//! the training fold. Absolute residuals of observed test-fold records form
//! a discrete distribution with mass `∝ 1/π̂(X_i)`; a query adds an atom at
//! `+∞` with mass `∝ 1/π̂(x_new)` and the interval half-width is the
//! `(1 − α)` quantile of that distribution.

use serde::{Deserialize, Serialize};

use crate::data::{Covariates, Dataset, SplitIndex};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::krr::{self, KrrModel, Mode};
use crate::propensity::{self, FeatureSelection, PropensityModel, Regularization};

/// `π̂` used when every training response is observed.
const FULL_OBSERVATION_PI: f64 = 1.0 - 1e-12;
const QUANTILE_TOL: f64 = 1e-12;

/// Serializes non-finite reals as the strings `"inf"` / `"-inf"`.
pub mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            v.serialize(s)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

/// How the conformal pipeline models `m` and `π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalOptions {
    /// Miscoverage level: intervals target `1 − alpha`.
    pub alpha: f64,
    pub spec: KernelSpec,
    pub propensity: FeatureSelection,
    pub regularization: Regularization,
    pub clip_floor: f64,
    /// λ grid for the regression and imputation fits (default grid when `None`).
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
}

/// Calibration residuals and the training-fold models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibration {
    /// `(|Y_i − m̂(X_i)|, 1/π̂(X_i))` for observed test-fold records.
    pub residuals: Vec<(f64, f64)>,
    pub alpha: f64,
    pub clip_floor: f64,
    pub model: KrrModel,
    pub propensity: PropensityModel,
}

/// A prediction interval `center ± half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalInterval {
    pub center: f64,
    #[serde(with = "inf_as_string")]
    pub half_width: f64,
    pub level: f64,
}

impl ConformalInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, y: f64) -> bool {
        (y - self.center).abs() <= self.half_width
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Fits `m̂` (doubly robust KRR with a complete-case imputer) and `π̂` on the
/// training fold and collects weighted residuals on the test fold.
pub fn calibrate(ds: &Dataset, split: &SplitIndex, options: &ConformalOptions) -> Result<ConformalCalibration> {
    check_alpha(options.alpha)?;
    let train = ds.subset(&split.training);
    let test = ds.subset(&split.test);
    if train.n_observed() < 2 {
        return Err(Error::Insufficient("training fold needs at least 2 observed responses".into()));
    }
    let needed = (1.0 / options.alpha).ceil() as usize;
    if test.n_observed() < needed {
        return Err(Error::Insufficient(format!(
            "test fold has {} observed responses; at least {needed} are needed at alpha = {}",
            test.n_observed(),
            options.alpha
        )));
    }
    let pi_model = if train.n_observed() == train.n() {
        PropensityModel::constant(FULL_OBSERVATION_PI)?
    } else {
        propensity::fit_propensity(&train, &options.propensity, options.regularization)?
    };
    let w = propensity::compute_weights(&train, &pi_model, options.clip_floor)?;
    let grid = options.lambda_grid.as_deref();
    let imputer = match grid {
        Some(g) => {
            let sel = krr::loo_lambda(&train, &options.spec, &w, g, Mode::CompleteCase, None)?;
            krr::impute(&train, &options.spec, &w, Some(sel.lambda))?
        }
        None => krr::impute(&train, &options.spec, &w, None)?,
    };
    let (model, _) = krr::fit_tuned(&train, &options.spec, &w, Mode::DoublyRobust, Some(&imputer), grid)?;

    let pred = model.predict(test.covariates())?;
    let pi = pi_model.predict(test.covariates())?;
    let mut residuals = Vec::with_capacity(test.n_observed());
    for i in test.observed_indices() {
        let e = (test.response(i)? - pred[i]).abs();
        residuals.push((e, 1.0 / pi[i].max(options.clip_floor)));
    }
    Ok(ConformalCalibration {
        residuals,
        alpha: options.alpha,
        clip_floor: options.clip_floor,
        model,
        propensity: pi_model,
    })
}

/// Smallest atom whose cumulative normalized mass reaches `level`; the
/// extra atom `(+∞, top_mass)` closes the distribution. Tied values share an atom.
pub fn weighted_quantile(atoms: &[(f64, f64)], top_mass: f64, level: f64) -> f64 {
    let mut sorted: Vec<(f64, f64)> = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|a| a.1).sum::<f64>() + top_mass;
    let target = level * total - QUANTILE_TOL * total;
    let mut cum = 0.0;
    let mut k = 0;
    while k < sorted.len() {
        let value = sorted[k].0;
        while k < sorted.len() && sorted[k].0 == value {
            cum += sorted[k].1;
            k += 1;
        }
        if cum >= target {
            return value;
        }
    }
    f64::INFINITY
}

impl ConformalCalibration {
    /// Interval for record `i` of `xs` at the calibration level.
    pub fn interval(&self, xs: &Covariates, i: usize) -> Result<ConformalInterval> {
        Ok(self.intervals_at(&xs.subset(&[i]), self.alpha)?[0])
    }

    /// Intervals for every record of `xs` at the calibration level.
    pub fn intervals(&self, xs: &Covariates) -> Result<Vec<ConformalInterval>> {
        self.intervals_at(xs, self.alpha)
    }

    /// Intervals at another miscoverage level with the same calibration.
    pub fn intervals_at(&self, xs: &Covariates, alpha: f64) -> Result<Vec<ConformalInterval>> {
        check_alpha(alpha)?;
        let centers = self.model.predict(xs)?;
        let pi = self.propensity.predict(xs)?;
        Ok(centers
            .into_iter()
            .zip(pi)
            .map(|(center, p)| ConformalInterval {
                center,
                half_width: weighted_quantile(&self.residuals, 1.0 / p.max(self.clip_floor), 1.0 - alpha),
                level: 1.0 - alpha,
            })
            .collect())
    }
}
