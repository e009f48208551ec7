//! Numerical layer: robust losses, box-bounded quasi-Newton minimization,
//! damped Gauss–Newton least squares and finite-difference derivatives.

mod bounded;
mod huber;
mod lsq;
mod multistart;
mod numdiff;

pub use bounded::minimize_bounded;
pub use huber::{huber, huber_derivative};
pub use lsq::{least_squares, LsqOptions};
pub use multistart::multistart;
pub use numdiff::{min_eigenvalue, numerical_gradient, numerical_hessian};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error("starting point violates bounds at coordinate {0}")]
    StartOutOfBounds(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid bounds at coordinate {0}: lower > upper")]
    InvalidBounds(usize),
    #[error("need at least {needed} data points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no starting points supplied")]
    NoStarts,
    #[error("every start failed: {}", .0.join("; "))]
    AllStartsFailed(Vec<String>),
}

/// Box constraints; use infinities for unbounded sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, OptimError> {
        if lower.len() != upper.len() {
            return Err(OptimError::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(OptimError::InvalidBounds(i));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.max(*l).min(*u);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Set by least squares when the final Jacobian is numerically
    /// rank-deficient or there are no residual degrees of freedom.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub objective_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            grad_tol: 1e-6,
            objective_tol: 1e-8,
        }
    }
}

/// A scalar objective over a parameter vector. Implementations must be
/// re-entrant so multistart can evaluate them from several threads.
pub trait Objective: Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the value. The default
    /// uses central differences.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let g = numerical_gradient(|p| self.value(p), x, 1e-7);
        grad.copy_from_slice(&g);
        self.value(x)
    }
}

/// Wraps a closure as an [`Objective`] with a finite-difference gradient.
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
