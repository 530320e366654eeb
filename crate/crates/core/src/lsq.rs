//! Small bounded Levenberg–Marquardt solver used by the PSD and squeezing fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when every parameter moves by less than this, relative.
    pub xtol: f64,
    /// Converged when an accepted step lowers the cost by less than this,
    /// relative.
    pub ftol: f64,
    /// Per-parameter bounds (infinite for none).
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LmOptions {
    pub fn unbounded(n_params: usize) -> Self {
        LmOptions {
            max_iterations: 500,
            xtol: 1e-10,
            ftol: 1e-14,
            lower: vec![f64::NEG_INFINITY; n_params],
            upper: vec![f64::INFINITY; n_params],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
}

impl LmOutcome {
    /// Asymptotic standard errors `sqrt(diag(s² (JᵀJ)⁻¹))`, with
    /// `s² = cost / (m - p)`. `None` when the normal matrix is singular or the
    /// problem has no residual degrees of freedom.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        let (m, p) = self.jacobian.shape();
        if m <= p {
            return None;
        }
        let s2 = self.cost / (m - p) as f64;
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let inv = jtj.try_inverse()?;
        Some((0..p).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect())
    }
}

/// Minimizes `Σ rᵢ(x)²` where `model(x)` returns residuals and their Jacobian.
pub fn levenberg_marquardt<F>(model: F, x0: &[f64], opts: &LmOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> (DVector<f64>, DMatrix<f64>),
{
    let p = x0.len();
    assert_eq!(opts.lower.len(), p, "one lower bound per parameter");
    assert_eq!(opts.upper.len(), p, "one upper bound per parameter");
    let project = |x: &mut [f64]| {
        for ((xi, lo), hi) in x.iter_mut().zip(&opts.lower).zip(&opts.upper) {
            *xi = xi.max(*lo).min(*hi);
        }
    };

    let mut x = x0.to_vec();
    project(&mut x);
    let (mut r, mut j) = model(&x);
    check_finite(&r, &j)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;

    for iteration in 1..=opts.max_iterations {
        if cost == 0.0 {
            return Ok(outcome(x, r, j, cost, iteration));
        }
        let grad = j.transpose() * &r;
        // Parameters pinned at their bound with the descent direction pointing
        // outward are held fixed for this step.
        let free: Vec<usize> = (0..p)
            .filter(|&i| {
                !(x[i] <= opts.lower[i] && grad[i] > 0.0 || x[i] >= opts.upper[i] && grad[i] < 0.0)
            })
            .collect();
        if free.is_empty() {
            return Ok(outcome(x, r, j, cost, iteration));
        }
        let jf = j.select_columns(&free);
        let jtj = jf.transpose() * &jf;
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));

        loop {
            let mut a = jtj.clone();
            for k in 0..free.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&gf)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e30 {
                        return Ok(outcome(x, r, j, cost, iteration));
                    }
                    continue;
                }
            };
            let mut trial = x.clone();
            for (k, &i) in free.iter().enumerate() {
                trial[i] += step[k];
            }
            project(&mut trial);
            let (tr, tj) = model(&trial);
            let tcost = tr.norm_squared();
            if tcost.is_finite() && tcost <= cost {
                let small =
                    trial.iter().zip(&x).all(|(new, old)| {
                        (new - old).abs() <= opts.xtol * old.abs().max(opts.xtol)
                    }) || cost - tcost <= opts.ftol * cost;
                check_finite(&tr, &tj)?;
                x = trial;
                r = tr;
                j = tj;
                cost = tcost;
                lambda = (lambda * 0.3).max(1e-12);
                if small {
                    return Ok(outcome(x, r, j, cost, iteration));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e30 {
                // No descent direction left at working precision.
                return Ok(outcome(x, r, j, cost, iteration));
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
    })
}

fn outcome(
    params: Vec<f64>,
    residuals: DVector<f64>,
    jacobian: DMatrix<f64>,
    cost: f64,
    iterations: usize,
) -> LmOutcome {
    LmOutcome {
        params,
        residuals,
        jacobian,
        cost,
        iterations,
    }
}

fn check_finite(r: &DVector<f64>, j: &DMatrix<f64>) -> Result<()> {
    if r.iter().chain(j.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("model produced non-finite residuals"))
    }
}
