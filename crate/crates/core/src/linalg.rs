use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const JITTER_STEPS: usize = 3;

/// Cholesky factor of a symmetric positive (semi)definite matrix.
///
/// On failure a diagonal jitter of `1e-10 · trace/n` is added and grown ×10,
/// at most three times.
pub(crate) fn cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    let n = a.nrows().max(1);
    let mut jitter = 1e-10 * (a.trace().abs() / n as f64).max(f64::MIN_POSITIVE);
    for _ in 0..JITTER_STEPS {
        let mut shifted = a.clone();
        for i in 0..a.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::Singular { pivot: smallest_pivot(a) })
}

pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(cholesky(a)?.solve(b))
}

/// Smallest absolute pivot of a partial-pivoting LU factorization.
pub(crate) fn smallest_pivot(a: &DMatrix<f64>) -> f64 {
    let lu = a.clone().lu();
    let u = lu.u();
    (0..u.nrows().min(u.ncols()))
        .map(|i| u[(i, i)].abs())
        .fold(f64::INFINITY, f64::min)
}
