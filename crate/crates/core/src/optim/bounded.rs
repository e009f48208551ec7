//! Projected limited-memory BFGS for box-constrained problems.
//!
//! Each iteration fixes the variables that sit on a bound with the gradient
//! pushing outward, builds a two-loop L-BFGS direction on the remaining free
//! variables, and runs a projected backtracking (Armijo) search along
//! `P(x + t·d)`. Non-finite trial values are treated as failed steps, so a
//! NaN can never reach the returned parameters.

use std::collections::VecDeque;

use super::{dot, inf_norm, Bounds, Objective, OptResult, OptimError, SolverOptions};

const MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const STALL_WINDOW: usize = 5;

pub fn minimize_bounded(
    objective: &dyn Objective,
    x0: &[f64],
    bounds: &Bounds,
    opts: &SolverOptions,
) -> Result<OptResult, OptimError> {
    let n = x0.len();
    if bounds.dim() != n {
        return Err(OptimError::Dimension {
            expected: bounds.dim(),
            got: n,
        });
    }
    if let Some(i) = (0..n).find(|&i| !(x0[i] >= bounds.lower()[i] && x0[i] <= bounds.upper()[i])) {
        return Err(OptimError::StartOutOfBounds(i));
    }

    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective.value_and_gradient(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFiniteStart);
    }

    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let mut pg_norm = projected_gradient_norm(&x, &g, bounds);

    while iterations < opts.max_iterations {
        if pg_norm < opts.grad_tol || f == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;

        let free = free_set(&x, &g, bounds);
        let mut d = lbfgs_direction(&g, &free, &memory);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            memory.clear();
            d = steepest(&g, &free);
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                // every free coordinate has zero gradient
                converged = true;
                break;
            }
        }

        let mut accepted = line_search(objective, &x, f, &g, &d, bounds, memory.is_empty());
        if accepted.is_none() && !memory.is_empty() {
            memory.clear();
            let d = steepest(&g, &free);
            accepted = line_search(objective, &x, f, &g, &d, bounds, true);
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // no decrease possible along the projected gradient at machine precision
            converged = pg_norm < opts.grad_tol.sqrt();
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) && sy.is_finite() {
            if memory.len() == MEMORY {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }

        x = x_new;
        f = f_new;
        g = g_new;
        pg_norm = projected_gradient_norm(&x, &g, bounds);
        history.push(f);

        if history.len() > STALL_WINDOW {
            let old = history[history.len() - 1 - STALL_WINDOW];
            let scale = old.abs().max(f.abs()).max(f64::MIN_POSITIVE);
            if (old - f) / scale < opts.objective_tol {
                converged = true;
                break;
            }
        }
    }

    Ok(OptResult {
        params: x,
        objective: f,
        iterations,
        converged,
        grad_norm: pg_norm,
        degenerate: false,
    })
}

fn at_lower(x: f64, l: f64) -> bool {
    x <= l
}

fn at_upper(x: f64, u: f64) -> bool {
    x >= u
}

fn free_set(x: &[f64], g: &[f64], b: &Bounds) -> Vec<bool> {
    (0..x.len())
        .map(|i| {
            !((at_lower(x[i], b.lower()[i]) && g[i] > 0.0)
                || (at_upper(x[i], b.upper()[i]) && g[i] < 0.0))
        })
        .collect()
}

/// `‖P(x − g) − x‖∞`
fn projected_gradient_norm(x: &[f64], g: &[f64], b: &Bounds) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let p = (x[i] - g[i]).max(b.lower()[i]).min(b.upper()[i]);
        m = m.max((p - x[i]).abs());
    }
    m
}

fn steepest(g: &[f64], free: &[bool]) -> Vec<f64> {
    g.iter()
        .zip(free)
        .map(|(v, &f)| if f { -v } else { 0.0 })
        .collect()
}

fn lbfgs_direction(g: &[f64], free: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(free)
            .map(|(x, &f)| if f { *x } else { 0.0 })
            .collect()
    };
    let mut q = mask(g);
    if memory.is_empty() {
        return q.into_iter().map(|v| -v).collect();
    }
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let s = mask(s);
        let y = mask(y);
        let a = rho * dot(&s, &q);
        for (qi, yi) in q.iter_mut().zip(&y) {
            *qi -= a * yi;
        }
        alphas.push((a, s, y));
    }
    let (s_last, y_last, _) = memory.back().expect("nonempty");
    let (s_last, y_last) = (mask(s_last), mask(y_last));
    let yy = dot(&y_last, &y_last);
    let sy = dot(&s_last, &y_last);
    let gamma = if yy > 0.0 && sy > 0.0 { sy / yy } else { 1.0 };
    let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
    for ((a, s, y), (_, _, rho)) in alphas.iter().rev().zip(memory.iter()) {
        let b = rho * dot(y, &r);
        for (ri, si) in r.iter_mut().zip(s) {
            *ri += (a - b) * si;
        }
    }
    let d: Vec<f64> = r.into_iter().map(|v| -v).collect();
    mask(&d)
}

fn line_search(
    objective: &dyn Objective,
    x: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
    bounds: &Bounds,
    first: bool,
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let dn = inf_norm(d);
    if dn == 0.0 || !dn.is_finite() {
        return None;
    }
    let mut t = if first { (1.0 / dn).min(1.0) } else { 1.0 };
    let mut trial = vec![0.0; x.len()];
    let mut g_new = vec![0.0; x.len()];
    for _ in 0..MAX_BACKTRACKS {
        for i in 0..x.len() {
            trial[i] = x[i] + t * d[i];
        }
        bounds.project(&mut trial);
        let step: Vec<f64> = trial.iter().zip(x).map(|(a, b)| a - b).collect();
        if inf_norm(&step) == 0.0 {
            return None;
        }
        let f_new = objective.value_and_gradient(&trial, &mut g_new);
        if f_new.is_finite()
            && g_new.iter().all(|v| v.is_finite())
            && f_new <= f + ARMIJO_C1 * dot(g, &step)
            && f_new < f
        {
            return Some((trial, f_new, g_new));
        }
        t *= 0.5;
    }
    None
}
