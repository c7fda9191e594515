//! Run configuration: one JSON document shared by every subcommand.

use std::fmt;
use std::path::{Path, PathBuf};

use rkhs_missing::gradsel::Penalty;
use rkhs_missing::kernels::{KernelSpec, TuneGrid};
use rkhs_missing::krr::Mode;
use rkhs_missing::propensity::{FeatureSelection, Regularization, DEFAULT_CLIP_FLOOR};
use serde::Deserialize;

/// A configuration problem tied to a field path.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    /// Synthetic design; its `seed` defaults to the run seed.
    #[serde(default)]
    pub simulate: Option<serde_json::Value>,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub propensity: PropensityConfig,
    #[serde(default)]
    pub hsic: HsicConfig,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub predict: Option<PredictConfig>,
    #[serde(default)]
    pub conformal: ConformalConfig,
    #[serde(default)]
    pub report: ReportConfig,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// Median-heuristic bandwidths, equal weight on informative sources.
    #[default]
    Median,
    Fixed { spec: KernelSpec },
    /// Grid search minimizing the LOO error of the `fit` estimator.
    Tuned {
        #[serde(default)]
        grid: TuneGrid,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Features {
    /// `"all"` or `"none"` (intercept only).
    Keyword(String),
    List(FeatureSelection),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropensityConfig {
    #[serde(default = "all_features")]
    pub features: Features,
    #[serde(default = "default_regularization")]
    pub regularization: Regularization,
    #[serde(default = "default_clip_floor")]
    pub clip_floor: f64,
    /// Use the observed fraction as `π̂` instead of a logistic fit.
    #[serde(default)]
    pub mcar: bool,
}

fn all_features() -> Features {
    Features::Keyword("all".into())
}

fn default_regularization() -> Regularization {
    Regularization::L2(1e-3)
}

fn default_clip_floor() -> f64 {
    DEFAULT_CLIP_FLOOR
}

impl Default for PropensityConfig {
    fn default() -> Self {
        Self {
            features: all_features(),
            regularization: default_regularization(),
            clip_floor: default_clip_floor(),
            mcar: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsicConfig {
    #[serde(default = "default_replicates")]
    pub m: usize,
    #[serde(default = "yes")]
    pub refit_propensity: bool,
    /// Covariates tested one at a time; every covariate when absent.
    #[serde(default)]
    pub variables: Option<Vec<String>>,
    /// Also test all covariates jointly.
    #[serde(default = "yes")]
    pub joint: bool,
    #[serde(default = "yes")]
    pub write_replicates: bool,
}

fn default_replicates() -> usize {
    199
}

fn yes() -> bool {
    true
}

impl Default for HsicConfig {
    fn default() -> Self {
        Self { m: default_replicates(), refit_propensity: true, variables: None, joint: true, write_replicates: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    #[serde(default = "default_penalty")]
    pub penalty: Penalty,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub locality_bandwidth: Option<f64>,
    #[serde(default)]
    pub kernel_sigma: Option<f64>,
    #[serde(default = "default_ridge_threshold")]
    pub ridge_threshold: f64,
}

fn default_penalty() -> Penalty {
    Penalty::GroupLasso
}

fn default_folds() -> usize {
    5
}

fn default_ridge_threshold() -> f64 {
    0.05
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            penalty: default_penalty(),
            folds: default_folds(),
            lambda_grid: None,
            locality_bandwidth: None,
            kernel_sigma: None,
            ridge_threshold: default_ridge_threshold(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Fixed ridge level; LOO over `lambda_grid` (or the default grid) when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Required for `doubly_robust`.
    #[serde(default)]
    pub imputer: Option<ImputerConfig>,
}

fn default_mode() -> Mode {
    Mode::Ipw
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { mode: default_mode(), lambda: None, lambda_grid: None, imputer: None }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputerConfig {
    #[serde(default)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub model: PathBuf,
    pub data: DataConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformalConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Records to build intervals for; the test fold when absent.
    #[serde(default)]
    pub queries: Option<DataConfig>,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_fraction() -> f64 {
    0.5
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self { alpha: default_alpha(), train_fraction: default_fraction(), lambda_grid: None, queries: None }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Directory holding earlier outputs; the output directory when absent.
    #[serde(default)]
    pub inputs: Option<PathBuf>,
    /// Numeric covariate on the residual plot's horizontal axis; the first
    /// numeric covariate when absent.
    #[serde(default)]
    pub baseline: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| invalid("<root>", e.to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.base_dir.join(p)
        } else {
            p.to_path_buf()
        }
    }

    fn check_data(&self, field: &str, data: &DataConfig) -> Result<(), ConfigError> {
        for (name, p) in [("path", &data.path), ("schema", &data.schema)] {
            if !self.resolve(p).is_file() {
                return Err(invalid(&format!("{field}.{name}"), format!("file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn require_data(&self) -> Result<&DataConfig, ConfigError> {
        let data = self.data.as_ref().ok_or_else(|| invalid("data", "required by this subcommand"))?;
        self.check_data("data", data)?;
        Ok(data)
    }

    fn check_propensity(&self) -> Result<(), ConfigError> {
        let p = &self.propensity;
        if !(p.clip_floor > 0.0 && p.clip_floor <= 0.5) {
            return Err(invalid("propensity.clip_floor", "must lie in (0, 0.5]"));
        }
        if let Features::Keyword(k) = &p.features {
            if k != "all" && k != "none" {
                return Err(invalid("propensity.features", "expected \"all\", \"none\" or a feature list"));
            }
        }
        match p.regularization {
            Regularization::L1(l) | Regularization::L2(l) if !(l > 0.0 && l.is_finite()) => {
                Err(invalid("propensity.regularization.lambda", "must be positive"))
            }
            _ => Ok(()),
        }
    }

    fn check_grid(field: &str, grid: &Option<Vec<f64>>) -> Result<(), ConfigError> {
        match grid {
            Some(g) if g.is_empty() => Err(invalid(field, "must not be empty")),
            Some(g) if g.iter().any(|l| !(l.is_finite() && *l > 0.0)) => Err(invalid(field, "values must be positive")),
            _ => Ok(()),
        }
    }

    fn check_kernel(&self) -> Result<(), ConfigError> {
        if let KernelConfig::Fixed { spec } = &self.kernel {
            spec.validate().map_err(|e| invalid("kernel.spec", e.to_string()))?;
        }
        Ok(())
    }

    fn check_fit(&self) -> Result<(), ConfigError> {
        let f = &self.fit;
        if f.mode == Mode::DoublyRobust && f.imputer.is_none() {
            return Err(invalid("fit.imputer", "required when fit.mode is \"doubly_robust\""));
        }
        if let Some(l) = f.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("fit.lambda", "must be positive"));
            }
        }
        if let Some(Some(l)) = f.imputer.as_ref().map(|i| i.lambda) {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("fit.imputer.lambda", "must be positive"));
            }
        }
        Self::check_grid("fit.lambda_grid", &f.lambda_grid)
    }

    /// Field-level validation for one subcommand. Structural checks come
    /// first; input files are checked last.
    pub fn validate(&self, command: &str) -> Result<(), ConfigError> {
        match command {
            "simulate" => {
                if self.simulate.is_none() {
                    return Err(invalid("simulate", "required by the simulate subcommand"));
                }
            }
            "propensity" => {
                self.check_propensity()?;
            }
            "hsic-test" => {
                self.check_propensity()?;
                self.check_kernel()?;
                if self.hsic.m < 99 {
                    return Err(invalid("hsic.m", "at least 99 bootstrap replicates are required"));
                }
            }
            "select" => {
                self.check_propensity()?;
                if self.select.folds < 2 {
                    return Err(invalid("select.folds", "at least 2 folds are required"));
                }
                Self::check_grid("select.lambda_grid", &self.select.lambda_grid)?;
                if let Some(h) = self.select.locality_bandwidth {
                    if !(h > 0.0) {
                        return Err(invalid("select.locality_bandwidth", "must be positive"));
                    }
                }
            }
            "fit" => {
                self.check_propensity()?;
                self.check_kernel()?;
                self.check_fit()?;
            }
            "predict" => {
                let p = self.predict.as_ref().ok_or_else(|| invalid("predict", "required by the predict subcommand"))?;
                if !self.resolve(&p.model).is_file() {
                    return Err(invalid("predict.model", format!("file {} does not exist", p.model.display())));
                }
                self.check_data("predict.data", &p.data)?;
            }
            "conformal" => {
                self.check_propensity()?;
                self.check_kernel()?;
                let c = &self.conformal;
                if !(c.alpha > 0.0 && c.alpha < 1.0) {
                    return Err(invalid("conformal.alpha", "must lie in (0, 1)"));
                }
                if !(c.train_fraction > 0.0 && c.train_fraction < 1.0) {
                    return Err(invalid("conformal.train_fraction", "must lie in (0, 1)"));
                }
                Self::check_grid("conformal.lambda_grid", &c.lambda_grid)?;
                if let Some(q) = &c.queries {
                    self.check_data("conformal.queries", q)?;
                }
            }
            "report" => {
                if let Some(dir) = &self.report.inputs {
                    if !self.resolve(dir).is_dir() {
                        return Err(invalid("report.inputs", format!("directory {} does not exist", dir.display())));
                    }
                }
            }
            other => return Err(invalid("<command>", format!("unknown subcommand `{other}`"))),
        }
        if !matches!(command, "simulate" | "predict") {
            self.require_data()?;
        }
        Ok(())
    }
}
