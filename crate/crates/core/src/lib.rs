//! Kernel learning with missing responses.
//!
//! The crate covers a complete analysis pipeline for regression data where
//! covariates are fully observed and the response is missing at random (or
//! missing as a function of covariates):
//!
//! - [`data`]: mixed-type datasets (numeric, categorical, distributional
//!   covariates stored as quantile functions) with an observation mask.
//! - [`kernels`]: per-source Gaussian kernels combined into a product kernel,
//!   Wasserstein-2 distances between quantile functions, median-heuristic
//!   bandwidths and grid tuning.
//! - [`propensity`]: logistic models for the observation probability and the
//!   inverse-probability weights built from them.
//! - [`hsic`]: weighted Hilbert-Schmidt independence statistic with a
//!   centered bootstrap calibration.
//! - [`gradsel`]: variable selection by learning the regression gradient with
//!   a group-sparsity penalty.
//! - [`krr`]: IPW and doubly-robust kernel ridge regression with closed-form
//!   leave-one-out tuning.
//! - [`conformal`]: split conformal intervals with weighted residual
//!   quantiles.
//! - [`simulate`]: synthetic designs with known ground truth and brute-force
//!   oracles.

pub mod conformal;
pub mod data;
pub mod error;
pub mod gradsel;
pub mod hsic;
pub mod kernels;
pub mod krr;
mod linalg;
pub mod propensity;
pub mod simulate;

pub use error::{Error, Result};
