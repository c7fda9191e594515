//! Variable selection by learning the gradient of the regression function.
//!
//! Each gradient component is `g_l(x) = Σ_j α_jl K(X_j, x)` in the RKHS of a
//! Gaussian kernel on the numeric covariates. The weighted objective is
//!
//! ```text
//! Σ_ij w_i w_j ω_ij (Y_i − Y_j − g(X_j)ᵀ(X_i − X_j))² + λ Σ_l pen(g_l)
//! ```
//!
//! with `pen = ‖·‖_K` (group lasso, exact zeros) or `‖·‖²_K` (ridge).
//! Records without a response carry zero weight, so the problem is solved
//! over the observed records only. Coefficients are parametrized as
//! `β_l = Λ^{1/2} Uᵀ α_l` for `K = U Λ Uᵀ`, which turns `‖g_l‖_K` into the
//! Euclidean norm `‖β_l‖`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{self, DistanceMatrices};
use crate::propensity::WeightVector;

/// Relative eigenvalue cutoff for the kernel basis.
const EIGEN_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    GroupLasso,
    Ridge,
}

/// Pairwise locality weights `ω_ij = exp(−d_ij²/(2h²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalityWeights {
    pub omega: DMatrix<f64>,
    pub bandwidth: f64,
}

impl LocalityWeights {
    /// Locality over the mixed covariate distance (sum of the per-source
    /// squared distances).
    pub fn new(ds: &Dataset, bandwidth: f64) -> Result<Self> {
        Self::from_distances(&DistanceMatrices::within(ds.covariates()).total(), bandwidth)
    }

    pub fn from_distances(d2: &DMatrix<f64>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!("locality bandwidth must be positive, got {bandwidth}")));
        }
        let h2 = 2.0 * bandwidth * bandwidth;
        Ok(Self { omega: d2.map(|d| (-d / h2).exp()), bandwidth })
    }

    /// Bandwidth from the median heuristic over all record pairs.
    pub fn median(ds: &Dataset) -> Result<Self> {
        let d2 = DistanceMatrices::within(ds.covariates()).total();
        let (dist, _) = kernels::pair_distances(&d2, None);
        let h = kernels::median_heuristic(&dist, None)?;
        Self::from_distances(&d2, h)
    }
}

/// Iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when the relative objective change falls below this.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-8 }
    }
}

/// Settings shared by fitting and cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientOptions {
    pub penalty: Penalty,
    pub solver: SolverOptions,
    /// Gaussian bandwidth of the gradient kernel; median heuristic when `None`.
    pub kernel_sigma: Option<f64>,
    /// Selection threshold as a fraction of the largest norm (ridge only;
    /// group lasso uses 0).
    pub ridge_threshold: f64,
}

impl GradientOptions {
    pub fn new(penalty: Penalty) -> Self {
        Self { penalty, solver: SolverOptions::default(), kernel_sigma: None, ridge_threshold: 0.05 }
    }
}

/// Fitted gradient and the variables it selects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub names: Vec<String>,
    /// `alpha[l][j]`: coefficient of record `j` in gradient component `l`.
    pub alpha: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub lambda: f64,
    pub threshold: f64,
    pub cv_error: Option<f64>,
    pub penalty: Penalty,
    pub kernel_sigma: f64,
    pub locality_bandwidth: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
}

/// Gaussian Gram matrix on numeric rows.
fn gaussian(xa: &DMatrix<f64>, xb: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let s2 = sigma * sigma;
    DMatrix::from_fn(xa.nrows(), xb.nrows(), |i, j| {
        let d: f64 = (0..xa.ncols()).map(|l| (xa[(i, l)] - xb[(j, l)]).powi(2)).sum();
        (-d / s2).exp()
    })
}

fn numeric_matrix(ds: &Dataset) -> DMatrix<f64> {
    let cov = ds.covariates();
    DMatrix::from_fn(ds.n(), cov.p_numeric(), |i, l| cov.numeric_row(i)[l])
}

/// Median-heuristic bandwidth of the gradient kernel over all records.
pub fn default_kernel_sigma(ds: &Dataset) -> Result<f64> {
    let x = numeric_matrix(ds);
    let d2 = DMatrix::from_fn(x.nrows(), x.nrows(), |i, j| (x.row(i) - x.row(j)).norm_squared());
    let (dist, _) = kernels::pair_distances(&d2, None);
    kernels::median_heuristic(&dist, None)
}

/// The quadratic part of the objective over a set of training records, in
/// the eigenbasis coordinates `B` (`r × p`).
struct Quadratic {
    x: DMatrix<f64>,
    /// `U_r Λ_r^{-1/2}` maps `B` back to `α`.
    to_alpha: DMatrix<f64>,
    phi: DMatrix<f64>,
    /// `A_j = Σ_i W_ij Δ_ij Δ_ijᵀ`, one `p × p` block per record.
    a: Vec<DMatrix<f64>>,
    /// Row `j`: `b_j = Σ_i W_ij (Y_i − Y_j) Δ_ij`.
    b: DMatrix<f64>,
    c0: f64,
    /// `Φᵀ b`.
    phitb: DMatrix<f64>,
    /// Eigenpairs of the diagonal Hessian blocks `H_l = Φᵀ diag_j(A_j[l,l]) Φ`.
    blocks: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl Quadratic {
    fn new(x: DMatrix<f64>, y: &[f64], w: &[f64], omega: &DMatrix<f64>, sigma: f64) -> Result<Self> {
        let (m, p) = x.shape();
        let k = gaussian(&x, &x, sigma);
        let SymmetricEigen { eigenvectors, eigenvalues } = SymmetricEigen::new(k);
        let top = eigenvalues.max();
        let keep: Vec<usize> = (0..m).filter(|&k| eigenvalues[k] > EIGEN_CUTOFF * top).collect();
        let r = keep.len();
        let phi = DMatrix::from_fn(m, r, |j, c| eigenvectors[(j, keep[c])] * eigenvalues[keep[c]].sqrt());
        let to_alpha = DMatrix::from_fn(m, r, |j, c| eigenvectors[(j, keep[c])] / eigenvalues[keep[c]].sqrt());
        let mut a = vec![DMatrix::zeros(p, p); m];
        let mut b = DMatrix::zeros(m, p);
        let mut c0 = 0.0;
        let mut delta = DVector::zeros(p);
        for j in 0..m {
            for i in 0..m {
                let wij = w[i] * w[j] * omega[(i, j)];
                if wij == 0.0 || i == j {
                    continue;
                }
                for l in 0..p {
                    delta[l] = x[(i, l)] - x[(j, l)];
                }
                let dy = y[i] - y[j];
                a[j].ger(wij, &delta, &delta, 1.0);
                for l in 0..p {
                    b[(j, l)] += wij * dy * delta[l];
                }
                c0 += wij * dy * dy;
            }
        }
        let phitb = phi.transpose() * &b;
        let blocks = (0..p)
            .map(|l| {
                let scaled = DMatrix::from_fn(m, r, |j, c| a[j][(l, l)] * phi[(j, c)]);
                let h = phi.transpose() * scaled;
                let SymmetricEigen { eigenvectors, eigenvalues } = SymmetricEigen::new(h);
                (eigenvectors, eigenvalues.map(|v| v.max(0.0)))
            })
            .collect();
        Ok(Self { x, to_alpha, phi, a, b, c0, phitb, blocks })
    }

    fn rank(&self) -> usize {
        self.phi.ncols()
    }

    fn p(&self) -> usize {
        self.x.ncols()
    }

    /// `Σ_j A_j G_j` per row with `G = ΦB`.
    fn a_times(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(g.nrows(), g.ncols());
        for j in 0..g.nrows() {
            let gj = g.row(j).transpose();
            out.set_row(j, &(&self.a[j] * gj).transpose());
        }
        out
    }

    fn value(&self, beta: &DMatrix<f64>) -> f64 {
        let g = &self.phi * beta;
        let ag = self.a_times(&g);
        g.dot(&ag) - 2.0 * g.dot(&self.b) + self.c0
    }

    /// Value and gradient `2Φᵀ(A G − b)`.
    #[cfg(test)]
    fn value_grad(&self, beta: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let g = &self.phi * beta;
        let ag = self.a_times(&g);
        let value = g.dot(&ag) - 2.0 * g.dot(&self.b) + self.c0;
        let grad = (self.phi.transpose() * (ag - &self.b)) * 2.0;
        (value, grad)
    }

    /// `Φᵀ A Φ B` (half the Hessian applied to `B`).
    fn half_hessian(&self, beta: &DMatrix<f64>) -> DMatrix<f64> {
        self.phi.transpose() * self.a_times(&(&self.phi * beta))
    }

    /// `max_l ‖∂/∂β_l‖` at zero: the smallest λ giving an all-zero group lasso fit.
    fn lambda_max(&self) -> f64 {
        (0..self.p()).map(|l| 2.0 * self.phitb.column(l).norm()).fold(0.0, f64::max)
    }
}

fn penalty_value(beta: &DMatrix<f64>, lambda: f64, penalty: Penalty) -> f64 {
    let norms = beta.column_iter().map(|c| c.norm());
    match penalty {
        Penalty::GroupLasso => lambda * norms.sum::<f64>(),
        Penalty::Ridge => lambda * norms.map(|n| n * n).sum::<f64>(),
    }
}

struct Solution {
    beta: DMatrix<f64>,
    trace: Vec<f64>,
    iterations: usize,
}

/// Minimizer of `uᵀHu + 2sᵀu + λ‖u‖` with `H = Q diag(σ) Qᵀ ⪰ 0`.
///
/// Zero when `2‖s‖ ≤ λ`; otherwise `u = −(H + νI)⁻¹ s` where `ν = λ/(2‖u‖)`
/// solves `Σ_k s̃_k² ν²/(σ_k + ν)² = λ²/4`, increasing in `ν`.
fn block_minimizer(q: &DMatrix<f64>, sigma: &DVector<f64>, s: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let norm = s.norm();
    if 2.0 * norm <= lambda {
        return DVector::zeros(s.len());
    }
    let st = q.transpose() * s;
    let target = 0.25 * lambda * lambda;
    let psi = |nu: f64| st.iter().zip(sigma.iter()).map(|(c, &g)| (c * nu / (g + nu)).powi(2)).sum::<f64>() - target;
    // ψ(0) < 0 < ψ(∞) = ‖s‖² − λ²/4; bracket, then bisect in log space.
    let mut hi = 1.0f64;
    while psi(hi) < 0.0 {
        hi *= 4.0;
    }
    let mut lo = hi;
    while psi(lo) >= 0.0 && lo > 1e-300 {
        lo /= 4.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if psi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let nu = 0.5 * (lo + hi);
    let scaled = DVector::from_fn(st.len(), |k, _| -st[k] / (sigma[k] + nu));
    q * scaled
}

/// Cyclic block coordinate descent: each sweep minimizes the objective
/// exactly over one coefficient block at a time, so the objective never
/// increases.
fn solve_group_lasso(q: &Quadratic, lambda: f64, init: Option<&DMatrix<f64>>, options: SolverOptions) -> Result<Solution> {
    let (r, p) = (q.rank(), q.p());
    let mut beta = init.cloned().unwrap_or_else(|| DMatrix::zeros(r, p));
    let mut g = &q.phi * &beta;
    let mut obj = q.value(&beta) + penalty_value(&beta, lambda, Penalty::GroupLasso);
    let mut trace = vec![obj];
    let m = g.nrows();
    for iteration in 1..=options.max_iter {
        for l in 0..p {
            // Column l of A·G − b, then s = Φᵀ(·) − H_l β_l.
            let col = DVector::from_fn(m, |j, _| (0..p).map(|k| q.a[j][(l, k)] * g[(j, k)]).sum::<f64>() - q.b[(j, l)]);
            let (qv, sigma) = &q.blocks[l];
            let bl = beta.column(l).into_owned();
            let h_bl = qv * DVector::from_fn(r, |k, _| sigma[k] * qv.column(k).dot(&bl));
            let s = q.phi.transpose() * col - h_bl;
            let u = block_minimizer(qv, sigma, &s, lambda);
            let delta = &u - &bl;
            if delta.iter().any(|&d| d != 0.0) {
                let gd = &q.phi * &delta;
                for j in 0..m {
                    g[(j, l)] += gd[j];
                }
                beta.set_column(l, &u);
            }
        }
        let next = q.value(&beta) + penalty_value(&beta, lambda, Penalty::GroupLasso);
        if next > obj {
            // Exact block steps only increase the objective through rounding.
            return Ok(Solution { beta, trace, iterations: iteration });
        }
        let change = (obj - next) / obj.abs().max(1e-300);
        obj = next;
        trace.push(obj);
        if change < options.tol {
            return Ok(Solution { beta, trace, iterations: iteration });
        }
    }
    Err(Error::NonConvergence { iterations: options.max_iter, final_objective: obj, trace })
}

/// Ridge penalty: the objective is quadratic, solved by conjugate gradients
/// on `(ΦᵀAΦ + λI) B = Φᵀb`.
fn solve_ridge(q: &Quadratic, lambda: f64, init: Option<&DMatrix<f64>>, options: SolverOptions) -> Result<Solution> {
    let (r, p) = (q.rank(), q.p());
    let apply = |v: &DMatrix<f64>| q.half_hessian(v) + v * lambda;
    let mut x = init.cloned().unwrap_or_else(|| DMatrix::zeros(r, p));
    let start = q.value(&x) + penalty_value(&x, lambda, Penalty::Ridge);
    let rhs_norm = q.phitb.norm();
    if rhs_norm == 0.0 {
        let zero = DMatrix::zeros(r, p);
        let v = q.value(&zero);
        return Ok(Solution { beta: zero, trace: vec![start, v], iterations: 0 });
    }
    let mut res = &q.phitb - apply(&x);
    let mut dir = res.clone();
    let mut rs = res.norm_squared();
    let max_iter = options.max_iter.max(10 * r * p);
    for iteration in 1..=max_iter {
        if rs.sqrt() <= 1e-13 * rhs_norm {
            let v = q.value(&x) + penalty_value(&x, lambda, Penalty::Ridge);
            return Ok(Solution { beta: x, trace: vec![start, v], iterations: iteration });
        }
        let ad = apply(&dir);
        let step = rs / dir.dot(&ad);
        x += &dir * step;
        res -= &ad * step;
        let rs_next = res.norm_squared();
        dir = &res + &dir * (rs_next / rs);
        rs = rs_next;
    }
    let v = q.value(&x) + penalty_value(&x, lambda, Penalty::Ridge);
    Err(Error::NonConvergence { iterations: max_iter, final_objective: v, trace: vec![start, v] })
}

fn solve(q: &Quadratic, lambda: f64, penalty: Penalty, init: Option<&DMatrix<f64>>, options: SolverOptions) -> Result<Solution> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    match penalty {
        Penalty::GroupLasso => solve_group_lasso(q, lambda, init, options),
        Penalty::Ridge => solve_ridge(q, lambda, init, options),
    }
}

/// Observed records with their responses and normalized weights.
struct Observed {
    idx: Vec<usize>,
    y: Vec<f64>,
    w: Vec<f64>,
}

fn observed(ds: &Dataset, weights: &WeightVector) -> Result<Observed> {
    if weights.n() != ds.n() {
        return Err(Error::InvalidArgument("weight vector length differs from n".into()));
    }
    let idx = ds.observed_indices();
    let y = idx.iter().map(|&i| ds.response(i)).collect::<Result<Vec<_>>>()?;
    let w = idx.iter().map(|&i| weights.normalized[i]).collect();
    Ok(Observed { idx, y, w })
}

fn renormalize(w: &[f64]) -> Result<Vec<f64>> {
    let s: f64 = w.iter().sum();
    if s <= 0.0 {
        return Err(Error::Insufficient("fold carries no weight".into()));
    }
    Ok(w.iter().map(|v| v / s).collect())
}

fn quadratic_for(
    x_all: &DMatrix<f64>,
    obs: &Observed,
    rows: &[usize],
    omega: &LocalityWeights,
    sigma: f64,
) -> Result<Quadratic> {
    let x = x_all.select_rows(rows.iter().map(|&t| &obs.idx[t]));
    let y: Vec<f64> = rows.iter().map(|&t| obs.y[t]).collect();
    let w = renormalize(&rows.iter().map(|&t| obs.w[t]).collect::<Vec<_>>())?;
    let om = DMatrix::from_fn(rows.len(), rows.len(), |a, b| omega.omega[(obs.idx[rows[a]], obs.idx[rows[b]])]);
    Quadratic::new(x, &y, &w, &om, sigma)
}

fn check_inputs(ds: &Dataset, omega: &LocalityWeights) -> Result<()> {
    if ds.covariates().p_numeric() == 0 {
        return Err(Error::InvalidArgument("gradient selection needs numeric covariates".into()));
    }
    if omega.omega.shape() != (ds.n(), ds.n()) {
        return Err(Error::InvalidArgument("locality weights do not match the dataset".into()));
    }
    if ds.n_observed() < ds.covariates().p_numeric() + 1 {
        return Err(Error::Insufficient(format!(
            "{} observed responses for {} numeric covariates",
            ds.n_observed(),
            ds.covariates().p_numeric()
        )));
    }
    Ok(())
}

fn resolve_sigma(ds: &Dataset, options: &GradientOptions) -> Result<f64> {
    match options.kernel_sigma {
        Some(s) if s > 0.0 => Ok(s),
        Some(s) => Err(Error::InvalidArgument(format!("kernel bandwidth must be positive, got {s}"))),
        None => default_kernel_sigma(ds),
    }
}

/// Fits the weighted gradient at a fixed `lambda`.
pub fn fit_gradient(
    ds: &Dataset,
    weights: &WeightVector,
    omega: &LocalityWeights,
    lambda: f64,
    options: &GradientOptions,
) -> Result<SelectionResult> {
    check_inputs(ds, omega)?;
    let sigma = resolve_sigma(ds, options)?;
    let obs = observed(ds, weights)?;
    let rows: Vec<usize> = (0..obs.idx.len()).collect();
    let q = quadratic_for(&numeric_matrix(ds), &obs, &rows, omega, sigma)?;
    let sol = solve(&q, lambda, options.penalty, None, options.solver)?;
    Ok(summarize(ds, &obs, &q, sol, lambda, sigma, omega.bandwidth, options))
}

fn summarize(
    ds: &Dataset,
    obs: &Observed,
    q: &Quadratic,
    sol: Solution,
    lambda: f64,
    sigma: f64,
    bandwidth: f64,
    options: &GradientOptions,
) -> SelectionResult {
    let names = ds.covariates().numeric_names().to_vec();
    let alpha_obs = &q.to_alpha * &sol.beta;
    let alpha = (0..q.p())
        .map(|l| {
            let mut full = vec![0.0; ds.n()];
            for (t, &i) in obs.idx.iter().enumerate() {
                full[i] = alpha_obs[(t, l)];
            }
            full
        })
        .collect();
    let norms: Vec<f64> = sol.beta.column_iter().map(|c| c.norm()).collect();
    let threshold = match options.penalty {
        Penalty::GroupLasso => 0.0,
        Penalty::Ridge => options.ridge_threshold * norms.iter().cloned().fold(0.0, f64::max),
    };
    let selected: Vec<usize> = (0..norms.len()).filter(|&l| norms[l] > threshold).collect();
    SelectionResult {
        selected_names: selected.iter().map(|&l| names[l].clone()).collect(),
        names,
        alpha,
        norms,
        selected,
        lambda,
        threshold,
        cv_error: None,
        penalty: options.penalty,
        kernel_sigma: sigma,
        locality_bandwidth: bandwidth,
        iterations: sol.iterations,
        objective_trace: sol.trace,
    }
}

/// Default λ grid: 12 log-spaced values from `λ_max` down to `1e-3·λ_max`,
/// where `λ_max` zeroes every group-lasso block on the full observed data.
pub fn default_lambda_grid(ds: &Dataset, weights: &WeightVector, omega: &LocalityWeights, options: &GradientOptions) -> Result<Vec<f64>> {
    check_inputs(ds, omega)?;
    let sigma = resolve_sigma(ds, options)?;
    let obs = observed(ds, weights)?;
    let rows: Vec<usize> = (0..obs.idx.len()).collect();
    let lmax = quadratic_for(&numeric_matrix(ds), &obs, &rows, omega, sigma)?.lambda_max();
    if !(lmax > 0.0) {
        return Err(Error::Degenerate("responses carry no pairwise signal".into()));
    }
    Ok((0..12).map(|k| lmax * 10f64.powf(-3.0 * k as f64 / 11.0)).collect())
}

/// K-fold cross-validation of λ over observed records (record of rank `r`
/// among observed goes to fold `r mod K`). Returns `(λ, cv_error)`; ties go
/// to the larger λ.
pub fn select_lambda(
    ds: &Dataset,
    weights: &WeightVector,
    omega: &LocalityWeights,
    grid: &[f64],
    folds: usize,
    options: &GradientOptions,
) -> Result<(f64, f64)> {
    let (lambda, err, _) = cv_path(ds, weights, omega, grid, folds, options)?;
    Ok((lambda, err))
}

fn cv_path(
    ds: &Dataset,
    weights: &WeightVector,
    omega: &LocalityWeights,
    grid: &[f64],
    folds: usize,
    options: &GradientOptions,
) -> Result<(f64, f64, Vec<f64>)> {
    check_inputs(ds, omega)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument("at least 2 folds are required".into()));
    }
    let sigma = resolve_sigma(ds, options)?;
    let obs = observed(ds, weights)?;
    let x_all = numeric_matrix(ds);
    let m = obs.idx.len();
    // Warm starts run along decreasing λ.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut errors = vec![0.0; grid.len()];
    for f in 0..folds {
        let test: Vec<usize> = (0..m).filter(|t| t % folds == f).collect();
        let train: Vec<usize> = (0..m).filter(|t| t % folds != f).collect();
        if test.len() < 2 || train.len() < 2 {
            return Err(Error::Insufficient(format!("fold {f} has fewer than 2 observed responses")));
        }
        let q = quadratic_for(&x_all, &obs, &train, omega, sigma)?;
        let xt = x_all.select_rows(test.iter().map(|&t| &obs.idx[t]));
        let cross = gaussian(&xt, &q.x, sigma);
        let wt = renormalize(&test.iter().map(|&t| obs.w[t]).collect::<Vec<_>>())?;
        let mut warm: Option<DMatrix<f64>> = None;
        for &g in &order {
            let sol = solve(&q, grid[g], options.penalty, warm.as_ref(), options.solver)?;
            let grad = &cross * (&q.to_alpha * &sol.beta);
            let mut loss = 0.0;
            for (a, &ti) in test.iter().enumerate() {
                for (b, &tj) in test.iter().enumerate() {
                    if a == b {
                        continue;
                    }
                    let (i, j) = (obs.idx[ti], obs.idx[tj]);
                    let wij = wt[a] * wt[b] * omega.omega[(i, j)];
                    let pred: f64 = (0..q.p()).map(|l| grad[(b, l)] * (xt[(a, l)] - xt[(b, l)])).sum();
                    let r = obs.y[ti] - obs.y[tj] - pred;
                    loss += wij * r * r;
                }
            }
            errors[g] += loss;
            warm = Some(sol.beta);
        }
    }
    let mut best = 0;
    for g in 1..grid.len() {
        if errors[g] < errors[best] || (errors[g] == errors[best] && grid[g] > grid[best]) {
            best = g;
        }
    }
    Ok((grid[best], errors[best], errors))
}

/// Cross-validates λ (default grid when `grid` is `None`) and refits on all
/// observed records.
pub fn select_variables(
    ds: &Dataset,
    weights: &WeightVector,
    omega: &LocalityWeights,
    grid: Option<&[f64]>,
    folds: usize,
    options: &GradientOptions,
) -> Result<SelectionResult> {
    let default;
    let grid = match grid {
        Some(g) => g,
        None => {
            default = default_lambda_grid(ds, weights, omega, options)?;
            &default
        }
    };
    let (lambda, cv_error) = select_lambda(ds, weights, omega, grid, folds, options)?;
    let mut result = fit_gradient(ds, weights, omega, lambda, options)?;
    result.cv_error = Some(cv_error);
    Ok(result)
}
