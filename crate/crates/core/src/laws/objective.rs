//! Mean Huber loss on log residuals for sums of power terms:
//!
//! `pred_i = Σ_j exp(c_j − e_j·(x_ij − s_j)) + E − F·h_i`
//!
//! Parameters are laid out as `[c_1..c_T, e_1..e_T, E]`, followed by `F` when
//! a decay column is present. With zero shifts `c_j` is the log coefficient,
//! so for the two-term law the layout is `(a, b, α, β, E)`.

use crate::optim::{huber, huber_derivative, Bounds, Objective};

#[derive(Debug, Clone)]
pub struct LogHuberObjective {
    /// `log_x[j][i]`: log covariate of term `j` at point `i`.
    log_x: Vec<Vec<f64>>,
    shift: Vec<f64>,
    decay: Option<Vec<f64>>,
    log_y: Vec<f64>,
    delta: f64,
}

impl LogHuberObjective {
    pub fn new(log_x: Vec<Vec<f64>>, decay: Option<Vec<f64>>, y: &[f64], delta: f64) -> Self {
        let shift = vec![0.0; log_x.len()];
        Self {
            log_x,
            shift,
            decay,
            log_y: y.iter().map(|v| v.ln()).collect(),
            delta,
        }
    }

    /// Measures each covariate from `shift[j]`; `c_j` then absorbs `e_j·s_j`.
    pub fn with_shift(mut self, shift: Vec<f64>) -> Self {
        assert_eq!(shift.len(), self.log_x.len());
        self.shift = shift;
        self
    }

    pub fn n_terms(&self) -> usize {
        self.log_x.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.n_terms() + 1 + usize::from(self.decay.is_some())
    }

    pub fn len(&self) -> usize {
        self.log_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_y.is_empty()
    }

    /// Log coefficients free, exponents, E and F non-negative.
    pub fn bounds(&self) -> Bounds {
        let t = self.n_terms();
        let mut lower = vec![f64::NEG_INFINITY; t];
        lower.extend(std::iter::repeat(0.0).take(self.dim() - t));
        Bounds::new(lower, vec![f64::INFINITY; self.dim()]).expect("valid bounds")
    }

    pub fn predict(&self, x: &[f64], i: usize) -> f64 {
        let t = self.n_terms();
        let mut pred = x[2 * t];
        for j in 0..t {
            pred += (x[j] - x[t + j] * (self.log_x[j][i] - self.shift[j])).exp();
        }
        if let Some(h) = &self.decay {
            pred -= x[2 * t + 1] * h[i];
        }
        pred
    }

    fn eval(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let t = self.n_terms();
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut total = 0.0;
        let mut terms = vec![0.0; t];
        for i in 0..self.len() {
            let mut pred = x[2 * t];
            for j in 0..t {
                terms[j] = (x[j] - x[t + j] * (self.log_x[j][i] - self.shift[j])).exp();
                pred += terms[j];
            }
            let h = self.decay.as_ref().map_or(0.0, |d| d[i]);
            if self.decay.is_some() {
                pred -= x[2 * t + 1] * h;
            }
            if !(pred > 0.0) || !pred.is_finite() {
                return f64::INFINITY;
            }
            let r = pred.ln() - self.log_y[i];
            total += huber(r, self.delta);
            if let Some(g) = grad.as_deref_mut() {
                let w = huber_derivative(r, self.delta) / pred;
                for j in 0..t {
                    g[j] += w * terms[j];
                    g[t + j] -= w * terms[j] * (self.log_x[j][i] - self.shift[j]);
                }
                g[2 * t] += w;
                if self.decay.is_some() {
                    g[2 * t + 1] -= w * h;
                }
            }
        }
        let n = self.len() as f64;
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v /= n);
        }
        total / n
    }
}

impl Objective for LogHuberObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad))
    }
}

/// Picks up to `count` entries of `grid` along a golden-ratio sequence,
/// skipping repeats, so any cap spreads evenly over the grid.
pub(crate) fn subsample<T: Clone>(grid: &[T], count: usize) -> Vec<T> {
    if count >= grid.len() {
        return grid.to_vec();
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut taken = vec![false; grid.len()];
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let idx = (((i as f64) * phi).fract() * grid.len() as f64) as usize;
        let idx = idx.min(grid.len() - 1);
        if !taken[idx] {
            taken[idx] = true;
            out.push(grid[idx].clone());
        }
        i += 1;
    }
    out
}
