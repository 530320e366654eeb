//! Covariance-matrix description of Gaussian states.
//!
//! Quadratures are defined by `b = x + i p`, so `[x, p] = i/2` and the vacuum
//! has variance 1/4 in every quadrature. Vectors and matrices are ordered
//! `(x1, p1, x2, p2, ...)`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::streams;

/// Variance of a vacuum quadrature.
pub const VACUUM_VARIANCE: f64 = 0.25;

const SYMMETRY_TOL: f64 = 1e-12;
const PHYSICAL_TOL: f64 = 1e-10;
const SAMPLE_JITTER: f64 = 1e-12;

/// A point in phase space, one entry per quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadPoint(Vec<f64>);

impl QuadPoint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("phase-space point has non-finite entries"));
        }
        Ok(QuadPoint(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<QuadPoint> for Vec<f64> {
    fn from(p: QuadPoint) -> Self {
        p.0
    }
}

/// Mean vector and symmetric covariance matrix over the quadratures of
/// `n_modes` bosonic modes.
///
/// Construction only checks shape, finiteness and symmetry. Estimated
/// matrices can violate the uncertainty principle, so physicality is a
/// query ([`GaussianState::is_physical`]) rather than a constructor check.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    n_modes: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Standard symplectic form, `[[0, 1], [-1, 0]]` on each mode.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let dim = 2 * n_modes;
    let mut omega = DMatrix::zeros(dim, dim);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Symplectic matrix of `exp[r (b1 b2 - b1† b2†)]` in the gauge where
/// `x1 - x2` and `p1 + p2` are the squeezed combinations.
pub fn two_mode_squeezer(r: f64) -> DMatrix<f64> {
    let (c, s) = (r.cosh(), r.sinh());
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        c,   0.0, s,   0.0,
        0.0, c,   0.0, -s,
        s,   0.0, c,   0.0,
        0.0, -s,  0.0, c,
    ]);
    m
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::invalid(format!(
                "mean vector length {dim} is not a positive even number"
            )));
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::invalid(format!(
                "covariance is {}x{}, expected {dim}x{dim}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("state has non-finite entries"));
        }
        let scale = cov.amax().max(1.0);
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::invalid(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(GaussianState {
            n_modes: dim / 2,
            mean,
            cov,
        })
    }

    /// Zero-mean state with the given covariance.
    pub fn centered(cov: DMatrix<f64>) -> Result<Self> {
        let mean = DVector::zeros(cov.nrows());
        Self::new(mean, cov)
    }

    pub fn vacuum(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::invalid("vacuum state needs at least one mode"));
        }
        let dim = 2 * n_modes;
        Ok(GaussianState {
            n_modes,
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * VACUUM_VARIANCE,
        })
    }

    /// Closed-form two-mode squeezed vacuum mixed with `n_add` thermal photons
    /// per mode: diagonal `cosh(2r)/4 + n_add/2`, `<x1 x2> = sinh(2r)/4`,
    /// `<p1 p2> = -sinh(2r)/4`.
    pub fn two_mode_squeezed(r: f64, n_add: f64) -> Result<Self> {
        if !r.is_finite() {
            return Err(Error::invalid("squeezing parameter must be finite"));
        }
        check_n_add(n_add)?;
        let d = (2.0 * r).cosh() / 4.0 + n_add / 2.0;
        let s = (2.0 * r).sinh() / 4.0;
        #[rustfmt::skip]
        let cov = DMatrix::from_row_slice(4, 4, &[
            d,   0.0, s,   0.0,
            0.0, d,   0.0, -s,
            s,   0.0, d,   0.0,
            0.0, -s,  0.0, d,
        ]);
        Ok(GaussianState {
            n_modes: 2,
            mean: DVector::zeros(4),
            cov,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Applies a linear map `S` to the quadratures: `mean -> S mean`,
    /// `cov -> S cov S^T`.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.nrows() != self.dim() || s.ncols() != self.dim() {
            return Err(Error::invalid("transformation has the wrong dimension"));
        }
        Self::new(s * &self.mean, s * &self.cov * s.transpose())
    }

    pub fn two_mode_squeeze(&self, r: f64) -> Result<Self> {
        if self.n_modes != 2 {
            return Err(Error::invalid(format!(
                "two-mode squeezing needs 2 modes, state has {}",
                self.n_modes
            )));
        }
        if !r.is_finite() {
            return Err(Error::invalid("squeezing parameter must be finite"));
        }
        self.transform(&two_mode_squeezer(r))
    }

    /// Adds `n_add/2` to every quadrature variance.
    pub fn add_thermal_noise(&self, n_add: f64) -> Result<Self> {
        check_n_add(n_add)?;
        let dim = self.dim();
        Ok(GaussianState {
            n_modes: self.n_modes,
            mean: self.mean.clone(),
            cov: &self.cov + DMatrix::identity(dim, dim) * (n_add / 2.0),
        })
    }

    /// Wigner function `(2π)^-n / sqrt(det V) · exp(-½ (α-μ)ᵀ V⁻¹ (α-μ))`.
    pub fn wigner(&self, point: &QuadPoint) -> Result<f64> {
        let evaluator = WignerEvaluator::new(self)?;
        evaluator.density(point.as_slice())
    }

    /// Reduced Gaussian on two quadratures (indices into the quadrature
    /// vector). The result is a one-mode state over `(a, b)`.
    pub fn marginal(&self, a: usize, b: usize) -> Result<Self> {
        let dim = self.dim();
        if a >= dim || b >= dim || a == b {
            return Err(Error::invalid(format!(
                "marginal indices ({a}, {b}) must be distinct and below {dim}"
            )));
        }
        let idx = [a, b];
        let mean = DVector::from_fn(2, |i, _| self.mean[idx[i]]);
        let cov = DMatrix::from_fn(2, 2, |i, j| self.cov[(idx[i], idx[j])]);
        Ok(GaussianState {
            n_modes: 1,
            mean,
            cov,
        })
    }

    /// Two-mode squeezing witness `Var(x1 - x2) + Var(p1 + p2)`; the vacuum
    /// gives 1 and values below 1 certify squeezing beyond the standard
    /// quantum limit.
    pub fn witness(&self) -> Result<f64> {
        if self.n_modes != 2 {
            return Err(Error::invalid("witness is defined for two modes"));
        }
        let v = &self.cov;
        let var_x = v[(0, 0)] + v[(2, 2)] - 2.0 * v[(0, 2)];
        let var_p = v[(1, 1)] + v[(3, 3)] + 2.0 * v[(1, 3)];
        Ok(var_x + var_p)
    }

    /// Smallest eigenvalue of the Hermitian matrix `V + (i/4) Ω`.
    pub fn uncertainty_min_eigenvalue(&self) -> f64 {
        // H = A + iB is PSD iff the real embedding [[A, -B], [B, A]] is.
        let dim = self.dim();
        let b = symplectic_form(self.n_modes) * 0.25;
        let mut m = DMatrix::zeros(2 * dim, 2 * dim);
        m.view_mut((0, 0), (dim, dim)).copy_from(&self.cov);
        m.view_mut((dim, dim), (dim, dim)).copy_from(&self.cov);
        m.view_mut((0, dim), (dim, dim)).copy_from(&(-&b));
        m.view_mut((dim, 0), (dim, dim)).copy_from(&b);
        m.symmetric_eigenvalues().min()
    }

    pub fn is_physical(&self) -> bool {
        self.uncertainty_min_eigenvalue() >= -PHYSICAL_TOL
    }

    /// Lower-triangular factor `L` with `L Lᵀ = cov + jitter·I`.
    pub(crate) fn sampling_factor(&self) -> Result<DMatrix<f64>> {
        let scale = self.cov.amax().max(1.0);
        let min_eig = self.cov.symmetric_eigenvalues().min();
        if min_eig < -PHYSICAL_TOL * scale {
            return Err(Error::InvalidCovariance {
                min_eigenvalue: min_eig,
            });
        }
        let dim = self.dim();
        let jittered = &self.cov + DMatrix::identity(dim, dim) * SAMPLE_JITTER;
        jittered
            .cholesky()
            .map(|c| c.unpack())
            .ok_or(Error::InvalidCovariance {
                min_eigenvalue: min_eig,
            })
    }

    /// `n` independent draws from the multivariate normal `(mean, cov)`.
    /// Deterministic for a fixed seed and independent of the thread count.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<QuadPoint>> {
        let factor = self.sampling_factor()?;
        let dim = self.dim();
        Ok(streams::collect_chunks(n, seed, |rng, range, out| {
            let mut z = DVector::<f64>::zeros(dim);
            for _ in range {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(rng);
                }
                let x = &self.mean + &factor * &z;
                out.push(QuadPoint(x.iter().copied().collect()));
            }
        }))
    }
}

fn check_n_add(n_add: f64) -> Result<()> {
    if !(n_add >= 0.0) || !n_add.is_finite() {
        return Err(Error::invalid(format!(
            "added photon number must be finite and >= 0, got {n_add}"
        )));
    }
    Ok(())
}

/// Precomputed inverse and normalization for repeated Wigner evaluation.
#[derive(Debug, Clone)]
pub struct WignerEvaluator {
    mean: DVector<f64>,
    inv: DMatrix<f64>,
    norm: f64,
}

impl WignerEvaluator {
    pub fn new(state: &GaussianState) -> Result<Self> {
        let det = state.cov.determinant();
        if !(det > 1e-300) {
            return Err(Error::SingularCovariance { det });
        }
        let chol = state
            .cov
            .clone()
            .cholesky()
            .ok_or(Error::SingularCovariance { det })?;
        let n = state.n_modes as i32;
        Ok(WignerEvaluator {
            mean: state.mean.clone(),
            inv: chol.inverse(),
            norm: (2.0 * std::f64::consts::PI).powi(-n) / det.sqrt(),
        })
    }

    pub fn density(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.mean.len() {
            return Err(Error::invalid(format!(
                "point has {} quadratures, state has {}",
                point.len(),
                self.mean.len()
            )));
        }
        let d = DVector::from_column_slice(point) - &self.mean;
        let q = d.dot(&(&self.inv * &d));
        Ok(self.norm * (-0.5 * q).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn vacuum_covariance() {
        let v = GaussianState::vacuum(2).unwrap();
        assert_eq!(v.cov(), &(DMatrix::identity(4, 4) * 0.25));
        assert_eq!(v.mean(), &DVector::zeros(4));
        let v1 = GaussianState::vacuum(1).unwrap();
        assert_eq!(v1.cov(), &(DMatrix::identity(2, 2) * 0.25));
        assert!(v.is_physical() && v1.is_physical());
        assert!(GaussianState::vacuum(5).unwrap().is_physical());
    }

    #[test]
    fn vacuum_needs_modes() {
        assert!(matches!(
            GaussianState::vacuum(0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn squeeze_at_zero_is_identity() {
        let v = GaussianState::vacuum(2).unwrap();
        assert_eq!(v.two_mode_squeeze(0.0).unwrap(), v);
    }

    #[test]
    fn squeeze_reference_value() {
        let s = GaussianState::vacuum(2)
            .unwrap()
            .two_mode_squeeze(1.78)
            .unwrap();
        let c = s.cov();
        // (e^{3.56} ± e^{-3.56}) / 8
        let (ep, em) = (3.56f64.exp(), (-3.56f64).exp());
        for i in 0..4 {
            assert!((c[(i, i)] - (ep + em) / 8.0).abs() < 1e-12, "{}", c[(i, i)]);
            assert!((c[(i, i)] - 4.39895).abs() < 1e-5);
        }
        assert!((c[(0, 2)] - (ep - em) / 8.0).abs() < 1e-12);
        assert!((c[(1, 3)] + (ep - em) / 8.0).abs() < 1e-12);
        assert!((c[(0, 2)] - 4.39184).abs() < 1e-5);
    }

    #[test]
    fn squeezed_difference_variance() {
        let s = GaussianState::vacuum(2)
            .unwrap()
            .two_mode_squeeze(1.75)
            .unwrap();
        let c = s.cov();
        let var = c[(0, 0)] + c[(2, 2)] - 2.0 * c[(0, 2)];
        assert!(close(var, (-3.5f64).exp() / 2.0, 1e-12));
        assert!((var - 0.015_10).abs() < 1e-5);
    }

    #[test]
    fn squeeze_rejects_wrong_mode_count() {
        let v = GaussianState::vacuum(3).unwrap();
        assert!(matches!(
            v.two_mode_squeeze(1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn squeezer_matches_matrix_exponential() {
        #[rustfmt::skip]
        let generator = DMatrix::from_row_slice(4, 4, &[
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, -1.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, -1.0, 0.0, 0.0,
        ]);
        for r in [-1.2, 0.3, 1.78] {
            let exp = (&generator * r).exp();
            assert!((exp - two_mode_squeezer(r)).amax() < 1e-12);
        }
    }

    #[test]
    fn squeezer_is_symplectic() {
        let omega = symplectic_form(2);
        let s = two_mode_squeezer(0.9);
        assert!((&s * &omega * s.transpose() - &omega).amax() < 1e-12);
    }

    #[test]
    fn closed_form_matches_symplectic_route() {
        let a = GaussianState::two_mode_squeezed(1.78, 0.0).unwrap();
        let b = GaussianState::vacuum(2)
            .unwrap()
            .two_mode_squeeze(1.78)
            .unwrap();
        assert!((a.cov() - b.cov()).amax() < 1e-12);
        assert_eq!(
            GaussianState::two_mode_squeezed(0.0, 0.0).unwrap(),
            GaussianState::vacuum(2).unwrap()
        );
    }

    #[test]
    fn excess_noise_scenario_diagonal() {
        let n_add = 0.06 * 3.56f64.cosh() / 4.0;
        assert!((n_add - 0.2639).abs() < 1e-4);
        let s = GaussianState::two_mode_squeezed(1.78, n_add).unwrap();
        assert!(close(s.cov()[(0, 0)], 1.03 * 3.56f64.cosh() / 4.0, 1e-12));
        let composed = GaussianState::vacuum(2)
            .unwrap()
            .two_mode_squeeze(1.78)
            .unwrap()
            .add_thermal_noise(n_add)
            .unwrap();
        assert!((composed.cov() - s.cov()).amax() < 1e-12);
    }

    #[test]
    fn negative_noise_rejected() {
        assert!(GaussianState::two_mode_squeezed(1.0, -0.1).is_err());
        assert!(GaussianState::vacuum(1)
            .unwrap()
            .add_thermal_noise(-1.0)
            .is_err());
    }

    #[test]
    fn thermal_noise_on_vacuum() {
        let v = GaussianState::vacuum(1).unwrap();
        assert_eq!(v.add_thermal_noise(0.0).unwrap(), v);
        let t = v.add_thermal_noise(1.0).unwrap();
        assert_eq!(t.cov(), &(DMatrix::identity(2, 2) * 0.75));
    }

    #[test]
    fn wigner_values() {
        let v = GaussianState::vacuum(2).unwrap();
        let origin = QuadPoint::new(vec![0.0; 4]).unwrap();
        let w0 = v.wigner(&origin).unwrap();
        assert!(close(w0, 4.0 / (PI * PI), 1e-14));
        assert!((w0 - 0.4053).abs() < 1e-4);
        let w1 = v
            .wigner(&QuadPoint::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap())
            .unwrap();
        assert!(close(w1, 4.0 / (PI * PI) * (-2.0f64).exp(), 1e-14));
        assert!((w1 - 0.05485).abs() < 1e-5);
    }

    #[test]
    fn wigner_singular() {
        let s = GaussianState::centered(DMatrix::zeros(2, 2)).unwrap();
        let p = QuadPoint::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            s.wigner(&p),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn marginals() {
        let r: f64 = 1.1;
        let s = GaussianState::two_mode_squeezed(r, 0.0).unwrap();
        let m = s.marginal(0, 1).unwrap();
        let d = (2.0 * r).cosh() / 4.0;
        assert!((m.cov() - DMatrix::identity(2, 2) * d).amax() < 1e-15);
        let m = s.marginal(0, 2).unwrap();
        let o = (2.0 * r).sinh() / 4.0;
        assert!((m.cov() - DMatrix::from_row_slice(2, 2, &[d, o, o, d])).amax() < 1e-15);
        let v = GaussianState::vacuum(2).unwrap();
        assert_eq!(
            v.marginal(1, 3).unwrap().cov(),
            &(DMatrix::identity(2, 2) * 0.25)
        );
        assert!(s.marginal(0, 4).is_err());
        assert!(s.marginal(2, 2).is_err());
    }

    #[test]
    fn witness_values() {
        let v = GaussianState::vacuum(2).unwrap();
        assert!(close(v.witness().unwrap(), 1.0, 1e-15));
        let t = GaussianState::two_mode_squeezed(1.75, 0.0).unwrap();
        assert!(close(t.witness().unwrap(), (-3.5f64).exp(), 1e-12));
        assert!((t.witness().unwrap() - 0.03020).abs() < 1e-5);
        let t = GaussianState::two_mode_squeezed(0.7, 0.3).unwrap();
        assert!(close(t.witness().unwrap(), (-1.4f64).exp() + 0.6, 1e-12));
    }

    #[test]
    fn physicality() {
        let low = GaussianState::centered(DMatrix::identity(4, 4) * 0.125).unwrap();
        assert!(!low.is_physical());
        for r in [0.5, 1.75, 3.0] {
            assert!(GaussianState::two_mode_squeezed(r, 0.0)
                .unwrap()
                .is_physical());
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let mut c = DMatrix::identity(2, 2);
        c[(0, 1)] = 0.1;
        assert!(GaussianState::centered(c).is_err());
    }

    #[test]
    fn sample_edge_cases() {
        let v = GaussianState::vacuum(2).unwrap();
        assert!(v.sample(0, 1).unwrap().is_empty());
        let a = v.sample(1000, 99).unwrap();
        let b = v.sample(1000, 99).unwrap();
        assert_eq!(a, b);
        let bad =
            GaussianState::centered(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(matches!(
            bad.sample(10, 0),
            Err(Error::InvalidCovariance { .. })
        ));
    }

    #[test]
    fn vacuum_sample_variance() {
        let n = 1_000_000;
        let pts = GaussianState::vacuum(2).unwrap().sample(n, 2024).unwrap();
        let tol = 5.0 * (2.0 / n as f64).sqrt() * 0.25;
        for k in 0..4 {
            let m = pts.iter().map(|p| p.as_slice()[k]).sum::<f64>() / n as f64;
            let var = pts
                .iter()
                .map(|p| (p.as_slice()[k] - m).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            assert!((var - 0.25).abs() < tol, "quadrature {k}: {var}");
            assert!((var - 0.25).abs() < 0.0025);
        }
    }
}
