//! Levenberg–Marquardt nonlinear least squares with a finite-difference
//! Jacobian and optional box projection.

use nalgebra::{DMatrix, DVector};

use super::{inf_norm, Bounds, OptResult, OptimError};

#[derive(Debug, Clone)]
pub struct LsqOptions {
    pub max_iterations: usize,
    /// Relative cost reduction below which an accepted step ends the run.
    pub ftol: f64,
    /// Relative step size below which an accepted step ends the run.
    pub xtol: f64,
    /// Infinity norm of `Jᵀr` below which the run ends.
    pub gtol: f64,
    pub initial_damping: f64,
    pub bounds: Option<Bounds>,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-12,
            xtol: 1e-12,
            gtol: 1e-14,
            initial_damping: 1e-3,
            bounds: None,
        }
    }
}

/// Condition threshold for the column-normalized Jacobian.
const RANK_TOL: f64 = 1e-8;
const MAX_DAMPING: f64 = 1e16;

/// Minimizes `Σ (model(p, xᵢ) − yᵢ)²`. The reported objective is that sum.
pub fn least_squares<X, F>(
    model: F,
    data: &[(X, f64)],
    p0: &[f64],
    opts: &LsqOptions,
) -> Result<OptResult, OptimError>
where
    F: Fn(&[f64], &X) -> f64,
{
    let n = p0.len();
    let m = data.len();
    if m < n {
        return Err(OptimError::TooFewPoints { needed: n, got: m });
    }
    if let Some(b) = &opts.bounds {
        if b.dim() != n {
            return Err(OptimError::Dimension {
                expected: b.dim(),
                got: n,
            });
        }
    }

    let residuals = |p: &[f64]| -> DVector<f64> {
        DVector::from_iterator(m, data.iter().map(|(x, y)| model(p, x) - y))
    };
    let cost_of = |r: &DVector<f64>| r.norm_squared();

    let mut p = p0.to_vec();
    if let Some(b) = &opts.bounds {
        b.project(&mut p);
    }
    let mut r = residuals(&p);
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return Err(OptimError::NonFiniteStart);
    }

    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = jacobian(&residuals, &p, &r);
    let mut grad = jac.transpose() * &r;

    while iterations < opts.max_iterations {
        if cost == 0.0 || inf_norm(grad.as_slice()) <= opts.gtol {
            converged = true;
            break;
        }
        iterations += 1;

        let jtj = jac.transpose() * &jac;
        let max_diag = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda <= MAX_DAMPING {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&grad));
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            if let Some(b) = &opts.bounds {
                b.project(&mut trial);
            }
            let r_trial = residuals(&trial);
            let cost_trial = cost_of(&r_trial);
            if cost_trial.is_finite() && cost_trial < cost {
                let step: f64 = trial
                    .iter()
                    .zip(&p)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let p_norm: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rel_drop = (cost - cost_trial) / cost;
                p = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if rel_drop < opts.ftol || step <= opts.xtol * (p_norm + opts.xtol) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
        jac = jacobian(&residuals, &p, &r);
        grad = jac.transpose() * &r;
        if converged {
            break;
        }
    }

    let degenerate = m <= n || rank_deficient(&jac);
    Ok(OptResult {
        params: p,
        objective: cost,
        iterations,
        converged: converged && !degenerate,
        grad_norm: inf_norm(grad.as_slice()),
        degenerate,
    })
}

fn jacobian<R>(residuals: &R, p: &[f64], r0: &DVector<f64>) -> DMatrix<f64>
where
    R: Fn(&[f64]) -> DVector<f64>,
{
    let m = r0.len();
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut q = p.to_vec();
    for j in 0..n {
        let h = 1e-7 * p[j].abs().max(1.0);
        q[j] = p[j] + h;
        let up = residuals(&q);
        q[j] = p[j] - h;
        let down = residuals(&q);
        q[j] = p[j];
        let col = if up.iter().chain(down.iter()).all(|v| v.is_finite()) {
            (up - down) / (2.0 * h)
        } else {
            (residuals(&{
                let mut s = p.to_vec();
                s[j] += h;
                s
            }) - r0)
                / h
        };
        jac.set_column(j, &col);
    }
    jac
}

fn rank_deficient(jac: &DMatrix<f64>) -> bool {
    let mut scaled = jac.clone();
    for j in 0..scaled.ncols() {
        let norm = scaled.column(j).norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return true;
        }
        scaled.column_mut(j).scale_mut(1.0 / norm);
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    !(max > 0.0) || min <= RANK_TOL * max
}
