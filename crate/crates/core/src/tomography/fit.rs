//! Fit of an estimated covariance matrix to a two-mode squeezed state with
//! added thermal noise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{self, LmOptions};

/// The 10 independent elements of a symmetric 4×4 matrix.
const ELEMENTS: [(usize, usize); 10] = [
    (0, 0),
    (1, 1),
    (2, 2),
    (3, 3),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 2),
    (1, 3),
    (2, 3),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingFit {
    /// Two-parameter fit.
    pub r: f64,
    pub n_add: f64,
    /// Sum of squared element residuals of the two-parameter fit.
    pub residual: f64,
    /// Fit with `n_add` held at 0.
    pub r_pure: f64,
    pub residual_pure: f64,
}

/// Model value of element `(i, j)`.
fn model(i: usize, j: usize, r: f64, n_add: f64) -> f64 {
    match (i, j) {
        _ if i == j => (2.0 * r).cosh() / 4.0 + n_add / 2.0,
        (0, 2) => (2.0 * r).sinh() / 4.0,
        (1, 3) => -(2.0 * r).sinh() / 4.0,
        _ => 0.0,
    }
}

fn d_model_dr(i: usize, j: usize, r: f64) -> f64 {
    match (i, j) {
        _ if i == j => (2.0 * r).sinh() / 2.0,
        (0, 2) => (2.0 * r).cosh() / 2.0,
        (1, 3) => -(2.0 * r).cosh() / 2.0,
        _ => 0.0,
    }
}

/// Unweighted least squares over the 10 independent elements of `v`, with
/// `r >= 0` and `n_add >= 0`. Both the two-parameter fit and the pure-state
/// fit (`n_add = 0`) are returned.
pub fn fit_squeezing(v: &DMatrix<f64>) -> Result<SqueezingFit> {
    if v.shape() != (4, 4) {
        return Err(Error::invalid("squeezing fit needs a 4x4 covariance"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("covariance has non-finite entries"));
    }
    let target: Vec<f64> = ELEMENTS.iter().map(|&(i, j)| v[(i, j)]).collect();
    let r0 = (4.0 * v[(0, 2)].abs()).asinh() / 2.0;

    let two_param = |p: &[f64]| {
        let (r, n) = (p[0], p[1]);
        let res = DVector::from_iterator(
            10,
            ELEMENTS
                .iter()
                .zip(&target)
                .map(|(&(i, j), t)| model(i, j, r, n) - t),
        );
        let jac = DMatrix::from_fn(10, 2, |k, c| {
            let (i, j) = ELEMENTS[k];
            match c {
                0 => d_model_dr(i, j, r),
                _ if i == j => 0.5,
                _ => 0.0,
            }
        });
        (res, jac)
    };
    let mut opts = LmOptions::unbounded(2);
    opts.lower = vec![0.0, 0.0];
    let full = lsq::levenberg_marquardt(two_param, &[r0, 0.0], &opts)?;

    let pure = |p: &[f64]| {
        let r = p[0];
        let res = DVector::from_iterator(
            10,
            ELEMENTS
                .iter()
                .zip(&target)
                .map(|(&(i, j), t)| model(i, j, r, 0.0) - t),
        );
        let jac = DMatrix::from_fn(10, 1, |k, _| {
            let (i, j) = ELEMENTS[k];
            d_model_dr(i, j, r)
        });
        (res, jac)
    };
    let mut opts = LmOptions::unbounded(1);
    opts.lower = vec![0.0];
    let pure = lsq::levenberg_marquardt(pure, &[r0], &opts)?;

    Ok(SqueezingFit {
        r: full.params[0],
        n_add: full.params[1],
        residual: full.cost,
        r_pure: pure.params[0],
        residual_pure: pure.cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianState;

    #[test]
    fn exact_model_is_fixed_point() {
        let v = GaussianState::two_mode_squeezed(1.78, 0.0).unwrap();
        let f = fit_squeezing(v.cov()).unwrap();
        assert!((f.r - 1.78).abs() < 1e-10);
        assert!(f.n_add.abs() < 1e-10);
        assert!((f.r_pure - 1.78).abs() < 1e-10);
    }

    #[test]
    fn vacuum_fits_to_zero() {
        let v = GaussianState::vacuum(2).unwrap();
        let f = fit_squeezing(v.cov()).unwrap();
        assert_eq!((f.r, f.n_add), (0.0, 0.0));
    }

    #[test]
    fn inflated_diagonal() {
        let mut v = GaussianState::two_mode_squeezed(1.78, 0.0)
            .unwrap()
            .cov()
            .clone();
        for i in 0..4 {
            v[(i, i)] *= 1.03;
        }
        let f = fit_squeezing(&v).unwrap();
        let oracle = 0.06 * 3.56f64.cosh() / 4.0;
        assert!((f.n_add - oracle).abs() < 1e-8);
        assert!((f.r - 1.78).abs() < 1e-8);
        assert!(f.r_pure > 1.78);
        assert!(f.residual_pure > f.residual);
    }

    #[test]
    fn thermal_model_round_trip() {
        let v = GaussianState::two_mode_squeezed(0.9, 0.37).unwrap();
        let f = fit_squeezing(v.cov()).unwrap();
        assert!((f.r - 0.9).abs() < 1e-10);
        assert!((f.n_add - 0.37).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_finite() {
        let mut v = DMatrix::identity(4, 4);
        v[(1, 2)] = f64::NAN;
        assert!(matches!(fit_squeezing(&v), Err(Error::InvalidArgument(_))));
    }
}
