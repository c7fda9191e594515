use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use rkhs_missing::conformal::{self, ConformalCalibration, ConformalOptions};
use rkhs_missing::data::{self, ColumnRole, Dataset, Schema};
use rkhs_missing::gradsel::{self, GradientOptions, LocalityWeights, SolverOptions};
use rkhs_missing::hsic::{self, BootstrapOptions};
use rkhs_missing::kernels::{self, KernelSpec};
use rkhs_missing::krr::{self, KrrModel, Mode};
use rkhs_missing::propensity::{self, FeatureSelection, PropensityModel, WeightVector, GLUCO};
use rkhs_missing::simulate::{self, SimDesign};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{DataConfig, Features, KernelConfig, RunConfig};
use crate::output::{num, opt, read_csv, write_csv, write_json};

pub struct Context {
    pub cfg: RunConfig,
    pub output: PathBuf,
    pub seed_overridden: bool,
}

impl Context {
    fn out(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }
}

pub fn run(command: &str, ctx: &Context) -> Result<()> {
    std::fs::create_dir_all(&ctx.output).with_context(|| format!("creating {}", ctx.output.display()))?;
    match command {
        "simulate" => simulate(ctx),
        "propensity" => propensity(ctx),
        "hsic-test" => hsic_test(ctx),
        "select" => select(ctx),
        "fit" => fit(ctx),
        "predict" => predict(ctx),
        "conformal" => conformal(ctx),
        "report" => report(ctx),
        other => bail!("unknown subcommand `{other}`"),
    }
}

fn load(cfg: &RunConfig, data: &DataConfig) -> Result<(Dataset, Schema)> {
    let schema_path = cfg.resolve(&data.schema);
    let schema = Schema::from_path(&schema_path).with_context(|| format!("reading schema {}", schema_path.display()))?;
    let path = cfg.resolve(&data.path);
    let ds = data::load_dataset(&path, &schema).with_context(|| format!("loading {}", path.display()))?;
    Ok((ds, schema))
}

fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    let data = cfg.data.as_ref().ok_or_else(|| anyhow!("no `data` section"))?;
    Ok(load(cfg, data)?.0)
}

fn selection(cfg: &RunConfig, ds: &Dataset) -> FeatureSelection {
    match &cfg.propensity.features {
        Features::Keyword(k) if k == "none" => FeatureSelection::intercept_only(),
        Features::Keyword(_) => FeatureSelection::all(ds.covariates()),
        Features::List(sel) => sel.clone(),
    }
}

/// Weights per the propensity section; the model is `None` under MCAR.
fn weights(cfg: &RunConfig, ds: &Dataset) -> Result<(WeightVector, Option<PropensityModel>)> {
    let p = &cfg.propensity;
    if p.mcar {
        return Ok((propensity::mcar_weights_with_floor(ds, p.clip_floor)?, None));
    }
    let model = propensity::fit_propensity(ds, &selection(cfg, ds), p.regularization).context("propensity fit")?;
    let w = propensity::compute_weights(ds, &model, p.clip_floor)?;
    Ok((w, Some(model)))
}

fn imputer(cfg: &RunConfig, ds: &Dataset, spec: &KernelSpec, w: &WeightVector, mode: Mode) -> Result<Option<KrrModel>> {
    match (mode, &cfg.fit.imputer) {
        (Mode::DoublyRobust, Some(imp)) => Ok(Some(krr::impute(ds, spec, w, imp.lambda).context("imputation model")?)),
        (Mode::DoublyRobust, None) => bail!("fit.imputer is required for the doubly robust mode"),
        _ => Ok(None),
    }
}

/// Kernel for regression-type stages; `tuned` minimizes the LOO error of the
/// configured estimator.
fn kernel_spec(cfg: &RunConfig, ds: &Dataset, w: &WeightVector) -> Result<KernelSpec> {
    match &cfg.kernel {
        KernelConfig::Median => Ok(hsic::covariate_kernel_spec(ds)?),
        KernelConfig::Fixed { spec } => Ok(*spec),
        KernelConfig::Tuned { grid } => {
            let mode = cfg.fit.mode;
            let objective = |spec: &KernelSpec| -> rkhs_missing::Result<f64> {
                let imp = match mode {
                    Mode::DoublyRobust => Some(krr::impute(ds, spec, w, cfg.fit.imputer.as_ref().and_then(|i| i.lambda))?),
                    _ => None,
                };
                let k = kernels::gram(ds.covariates(), spec)?.values;
                let grid = cfg.fit.lambda_grid.clone().unwrap_or_else(|| krr::default_lambda_grid(&k));
                Ok(krr::loo_lambda_with_gram(ds, &k, w, &grid, mode, imp.as_ref())?.loo_error)
            };
            Ok(kernels::tune_spec(ds.covariates(), None, objective, grid).context("kernel tuning")?.spec)
        }
    }
}

fn simulate(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut design = cfg.simulate.clone().ok_or_else(|| anyhow!("no `simulate` section"))?;
    let obj = design.as_object_mut().ok_or_else(|| anyhow!("`simulate` must be an object"))?;
    if ctx.seed_overridden || !obj.contains_key("seed") {
        obj.insert("seed".into(), json!(cfg.seed));
    }
    let design: SimDesign = serde_json::from_value(design).context("invalid `simulate` section")?;
    let (ds, truth) = simulate::generate(&design)?;

    data::write_dataset_csv(&ds, &ctx.out("data.csv"))?;
    let cov = ds.covariates();
    let mut columns = BTreeMap::new();
    columns.insert("id".to_string(), ColumnRole::Id);
    for name in cov.numeric_names() {
        columns.insert(name.clone(), ColumnRole::Numeric);
    }
    for name in cov.categorical_names() {
        columns.insert(name.clone(), ColumnRole::Categorical);
    }
    columns.insert(ds.response_name().to_string(), ColumnRole::Response);
    let mut schema = Schema::new(columns);
    if cov.has_distributional() {
        data::write_quantile_csv(&ds, &ctx.out("quantiles.csv"))?;
        schema.quantiles = Some(PathBuf::from("quantiles.csv"));
    }
    write_json(&ctx.out("schema.json"), &schema)?;
    write_json(&ctx.out("truth.json"), &json!({ "design": design, "truth": truth }))?;
    Ok(())
}

fn propensity(ctx: &Context) -> Result<()> {
    let ds = dataset(&ctx.cfg)?;
    let (w, model) = weights(&ctx.cfg, &ds)?;
    write_json(
        &ctx.out("propensity.json"),
        &json!({
            "n": ds.n(),
            "n_observed": ds.n_observed(),
            "clip_floor": w.clip_floor,
            "recipe": w.recipe,
            "model": model,
        }),
    )?;
    let rows = (0..ds.n()).map(|i| {
        vec![ds.ids()[i].clone(), u8::from(ds.is_observed(i)).to_string(), num(w.pi[i]), num(w.raw[i]), num(w.normalized[i])]
    });
    write_csv(&ctx.out("weights.csv"), &["id", "observed", "pi", "raw_weight", "normalized_weight"], rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct HsicEntry {
    variable: String,
    statistic: f64,
    p_value: f64,
    m: usize,
    spec_x: KernelSpec,
}

#[derive(Debug, Serialize, Deserialize)]
struct HsicReport {
    seed: u64,
    m: usize,
    refit_propensity: bool,
    spec_y: KernelSpec,
    tests: Vec<HsicEntry>,
}

/// Label `JOINT` denotes the test on all covariates together.
const JOINT: &str = "joint";

fn hsic_test(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let ds = dataset(cfg)?;
    let (w, _) = weights(cfg, &ds)?;
    let cov = ds.covariates();
    let variables = match &cfg.hsic.variables {
        Some(v) => v.clone(),
        None => {
            let mut v: Vec<String> = cov.numeric_names().iter().chain(cov.categorical_names()).cloned().collect();
            if cov.has_distributional() {
                v.push(GLUCO.into());
            }
            v
        }
    };
    let spec_y = hsic::response_kernel_spec(&ds, &w.normalized)?;
    let options = BootstrapOptions { replicates: cfg.hsic.m, seed: cfg.seed, refit_propensity: cfg.hsic.refit_propensity };

    let mut blocks = Vec::new();
    for name in &variables {
        let sub = if name == GLUCO {
            if !cov.has_distributional() {
                bail!("hsic.variables: no distributional covariate to test");
            }
            cov.select(&[], &[], true)?
        } else if cov.numeric_names().contains(name) {
            cov.select(&[name.as_str()], &[], false)?
        } else if cov.categorical_names().contains(name) {
            cov.select(&[], &[name.as_str()], false)?
        } else {
            bail!("hsic.variables: unknown covariate `{name}`");
        };
        blocks.push((name.clone(), sub));
    }
    if cfg.hsic.joint {
        blocks.push((JOINT.to_string(), cov.clone()));
    }

    let mut tests = Vec::new();
    let mut rows = Vec::new();
    for (name, block) in blocks {
        let spec_x = match (&cfg.kernel, name.as_str()) {
            (KernelConfig::Fixed { spec }, JOINT) => *spec,
            _ => hsic::covariate_kernel_spec(&ds.with_covariates(block.clone())?)?,
        };
        let res = hsic::bootstrap_test_on(&ds, &block, &spec_x, &spec_y, &w, options)
            .with_context(|| format!("HSIC test for `{name}`"))?;
        if cfg.hsic.write_replicates {
            rows.extend(res.replicates.iter().enumerate().map(|(j, r)| vec![name.clone(), j.to_string(), num(*r)]));
        }
        tests.push(HsicEntry { variable: name, statistic: res.statistic, p_value: res.p_value, m: res.m, spec_x });
    }
    write_json(
        &ctx.out("hsic.json"),
        &HsicReport { seed: cfg.seed, m: cfg.hsic.m, refit_propensity: cfg.hsic.refit_propensity, spec_y, tests },
    )?;
    if cfg.hsic.write_replicates {
        write_csv(&ctx.out("hsic_replicates.csv"), &["variable", "replicate", "statistic"], rows)?;
    }
    Ok(())
}

fn select(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let ds = dataset(cfg)?;
    let (w, _) = weights(cfg, &ds)?;
    let s = &cfg.select;
    let omega = match s.locality_bandwidth {
        Some(h) => LocalityWeights::new(&ds, h)?,
        None => LocalityWeights::median(&ds)?,
    };
    let options = GradientOptions {
        penalty: s.penalty,
        solver: SolverOptions::default(),
        kernel_sigma: s.kernel_sigma,
        ridge_threshold: s.ridge_threshold,
    };
    let result = gradsel::select_variables(&ds, &w, &omega, s.lambda_grid.as_deref(), s.folds, &options)?;
    let rows = result.names.iter().enumerate().map(|(l, name)| {
        vec![name.clone(), num(result.norms[l]), u8::from(result.selected.contains(&l)).to_string()]
    });
    write_csv(&ctx.out("selection.csv"), &["variable", "norm", "selected"], rows)?;
    write_json(&ctx.out("selection.json"), &result)
}

fn fit(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let ds = dataset(cfg)?;
    let (w, _) = weights(cfg, &ds)?;
    let spec = kernel_spec(cfg, &ds, &w)?;
    let mode = cfg.fit.mode;
    let imp = imputer(cfg, &ds, &spec, &w, mode)?;
    let (model, selection) = match cfg.fit.lambda {
        Some(l) => (krr::fit(&ds, &spec, &w, l, mode, imp.as_ref())?, None),
        None => {
            let (m, s) = krr::fit_tuned(&ds, &spec, &w, mode, imp.as_ref(), cfg.fit.lambda_grid.as_deref())?;
            (m, Some(s))
        }
    };
    let loo = krr::loo_residuals(&ds, &spec, &w, model.lambda, mode, imp.as_ref())?;
    let r2 = krr::weighted_r2(&ds, &w.normalized, &loo)?;
    let fitted = model.predict(ds.covariates())?;
    let mut loo_by_record = vec![None; ds.n()];
    for &(i, e) in &loo {
        loo_by_record[i] = Some(e * model.scale.sd);
    }

    write_json(&ctx.out("model.json"), &model)?;
    write_json(
        &ctx.out("fit.json"),
        &json!({
            "mode": mode,
            "lambda": model.lambda,
            "spec": spec,
            "loo_error": model.loo_error,
            "loo_r2": r2,
            "selection": selection,
            "imputer_lambda": imp.as_ref().map(|m| m.lambda),
            "training_ref": model.training_ref,
        }),
    )?;
    let rows = (0..ds.n()).map(|i| {
        vec![
            ds.ids()[i].clone(),
            u8::from(ds.is_observed(i)).to_string(),
            opt(ds.response(i).ok()),
            num(fitted[i]),
            opt(loo_by_record[i]),
        ]
    });
    write_csv(&ctx.out("fitted.csv"), &["id", "observed", "response", "fitted", "loo_residual"], rows)
}

fn read_model(path: &Path) -> Result<KrrModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing model {}", path.display()))
}

fn predict(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let p = cfg.predict.as_ref().ok_or_else(|| anyhow!("no `predict` section"))?;
    let model = read_model(&cfg.resolve(&p.model))?;
    let schema = Schema::from_path(&cfg.resolve(&p.data.schema))?;
    let ds = data::load_dataset_with(&cfg.resolve(&p.data.path), &schema, &model.encoding)?;
    let pred = model.predict(ds.covariates())?;
    let rows = (0..ds.n()).map(|i| vec![ds.ids()[i].clone(), num(pred[i])]);
    write_csv(&ctx.out("predictions.csv"), &["id", "prediction"], rows)
}

fn conformal(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let c = &cfg.conformal;
    let ds = dataset(cfg)?;
    let split = data::split(&ds, c.train_fraction, cfg.seed)?;
    let train = ds.subset(&split.training);
    let spec = match &cfg.kernel {
        KernelConfig::Fixed { spec } => *spec,
        _ => {
            let (w, _) = weights(cfg, &train)?;
            kernel_spec(cfg, &train, &w)?
        }
    };
    let propensity = if cfg.propensity.mcar { FeatureSelection::intercept_only() } else { selection(cfg, &ds) };
    let options = ConformalOptions {
        alpha: c.alpha,
        spec,
        propensity,
        regularization: cfg.propensity.regularization,
        clip_floor: cfg.propensity.clip_floor,
        lambda_grid: c.lambda_grid.clone(),
    };
    let cal: ConformalCalibration = conformal::calibrate(&ds, &split, &options)?;
    let queries = match &c.queries {
        Some(q) => {
            let schema = Schema::from_path(&cfg.resolve(&q.schema))?;
            data::load_dataset_with(&cfg.resolve(&q.path), &schema, ds.encoding())?
        }
        None => ds.subset(&split.test),
    };
    let intervals = cal.intervals(queries.covariates())?;
    write_json(&ctx.out("calibration.json"), &json!({ "split": split, "calibration": cal }))?;
    let rows = intervals.iter().enumerate().map(|(i, iv)| {
        vec![
            queries.ids()[i].clone(),
            num(iv.center),
            num(iv.lower()),
            num(iv.upper()),
            num(iv.half_width),
            num(iv.level),
            opt(queries.response(i).ok()),
        ]
    });
    write_csv(&ctx.out("conformal.csv"), &CONFORMAL_HEADER, rows)
}

const CONFORMAL_HEADER: [&str; 7] = ["id", "prediction", "lower", "upper", "half_width", "level", "response"];

fn column(header: &[String], name: &str, file: &Path) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| anyhow!("{}: missing column `{name}`", file.display()))
}

fn report(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let inputs = cfg.report.inputs.as_ref().map_or_else(|| ctx.output.clone(), |d| cfg.resolve(d));
    let ds = dataset(cfg)?;
    let cov = ds.covariates();
    let baseline = match &cfg.report.baseline {
        Some(b) => b.clone(),
        None => cov.numeric_names().first().cloned().ok_or_else(|| anyhow!("report.baseline: no numeric covariate"))?,
    };
    let l = cov
        .numeric_names()
        .iter()
        .position(|n| *n == baseline)
        .ok_or_else(|| anyhow!("report.baseline: unknown numeric covariate `{baseline}`"))?;
    let index: BTreeMap<&str, usize> = ds.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    // (a) residuals against the baseline covariate, observed records only
    let fitted_path = inputs.join("fitted.csv");
    let (header, rows) = read_csv(&fitted_path)?;
    let (c_id, c_obs, c_y, c_fit) = (
        column(&header, "id", &fitted_path)?,
        column(&header, "observed", &fitted_path)?,
        column(&header, "response", &fitted_path)?,
        column(&header, "fitted", &fitted_path)?,
    );
    let mut residuals = Vec::new();
    for row in rows.iter().filter(|r| r[c_obs] == "1") {
        let i = *index
            .get(row[c_id].as_str())
            .ok_or_else(|| anyhow!("{}: id `{}` not in the data", fitted_path.display(), row[c_id]))?;
        let y: f64 = row[c_y].parse()?;
        let f: f64 = row[c_fit].parse()?;
        residuals.push(vec![row[c_id].clone(), num(ds.raw_numeric(i, l)), num(f), num(y - f)]);
    }
    write_csv(&ctx.out("residuals_vs_baseline.csv"), &["id", "baseline", "fitted", "residual"], residuals)?;

    // (b) per-query intervals
    let conformal_path = inputs.join("conformal.csv");
    let (header, rows) = read_csv(&conformal_path)?;
    let cols = CONFORMAL_HEADER.iter().map(|h| column(&header, h, &conformal_path)).collect::<Result<Vec<_>>>()?;
    let intervals = rows.iter().map(|r| cols.iter().map(|&c| r[c].clone()).collect());
    write_csv(&ctx.out("conformal_intervals.csv"), &CONFORMAL_HEADER, intervals)?;

    // (c) per-variable HSIC table
    let hsic_path = inputs.join("hsic.json");
    let text = std::fs::read_to_string(&hsic_path).with_context(|| format!("reading {}", hsic_path.display()))?;
    let hsic: HsicReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", hsic_path.display()))?;
    let table = hsic.tests.iter().map(|t| vec![t.variable.clone(), num(t.statistic), num(t.p_value), t.m.to_string()]);
    write_csv(&ctx.out("hsic_pvalues.csv"), &["variable", "statistic", "p_value", "m"], table)
}
