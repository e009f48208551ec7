//! Single-step variant: `Acc(N, D) = a / (1 + exp(−(A/N^α + B/D^β + E))) + b`,
//! fitted on final checkpoints only.

use serde::{Deserialize, Serialize};

use super::data::{final_accuracy_points, geometric_mean};
use super::objective::subsample;
use crate::error::{Error, Result};
use crate::optim::{minimize_bounded, multistart, Bounds, Objective, OptResult};
use crate::types::{CheckpointRecord, FitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleStepParams {
    /// a
    pub amplitude: f64,
    /// b
    pub offset: f64,
    /// A
    pub size_coef: f64,
    /// α
    pub size_exp: f64,
    /// B
    pub data_coef: f64,
    /// β
    pub data_exp: f64,
    /// E
    pub irreducible: f64,
}

impl SingleStepParams {
    pub fn formula(&self) -> String {
        format!(
            "Acc(N, D) = {:.2} / (1 + exp(-({:.2} / N^{:.2} + {:.2} / D^{:.2} + {:.2}))) + {:.2}",
            self.amplitude,
            self.size_coef,
            self.size_exp,
            self.data_coef,
            self.data_exp,
            self.irreducible,
            self.offset
        )
    }
}

pub fn eval_single_step(p: &SingleStepParams, n: f64, d: f64) -> f64 {
    let z = p.size_coef / n.powf(p.size_exp) + p.data_coef / d.powf(p.data_exp) + p.irreducible;
    p.amplitude / (1.0 + (-z).exp()) + p.offset
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub model_id: String,
    pub n_params: u64,
    pub tokens: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleStepFit {
    pub params: SingleStepParams,
    pub predicted: Vec<f64>,
    /// Percent, over points with non-zero accuracy.
    pub avg_rel_fit_error: f64,
    /// Set when the fitted accuracy barely moves across the observed model
    /// sizes (under 1% of the observed accuracy range).
    pub degenerate: bool,
    pub optimizer: OptResult,
}

/// Mean squared error in the centered parameterization
/// `[a, b, c_A, α, c_B, β, E]`.
struct SquaredError {
    ln_n: Vec<f64>,
    ln_d: Vec<f64>,
    acc: Vec<f64>,
}

fn sigma(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl SquaredError {
    fn z(&self, x: &[f64], i: usize) -> (f64, f64, f64) {
        let ta = (x[2] - x[3] * self.ln_n[i]).exp();
        let tb = (x[4] - x[5] * self.ln_d[i]).exp();
        (ta + tb + x[6], ta, tb)
    }

    fn eval(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut total = 0.0;
        for i in 0..self.acc.len() {
            let (z, ta, tb) = self.z(x, i);
            let s = sigma(z);
            let r = x[0] * s + x[1] - self.acc[i];
            if !r.is_finite() {
                return f64::INFINITY;
            }
            total += r * r;
            if let Some(g) = grad.as_deref_mut() {
                let w = 2.0 * r;
                let dz = w * x[0] * s * (1.0 - s);
                g[0] += w * s;
                g[1] += w;
                g[2] += dz * ta;
                g[3] -= dz * ta * self.ln_n[i];
                g[4] += dz * tb;
                g[5] -= dz * tb * self.ln_d[i];
                g[6] += dz;
            }
        }
        let n = self.acc.len() as f64;
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v /= n);
        }
        total / n
    }

    /// Least-squares `(a, b)` for fixed inner parameters.
    fn linear_part(&self, x: &[f64]) -> (f64, f64) {
        let s: Vec<f64> = (0..self.acc.len()).map(|i| sigma(self.z(x, i).0)).collect();
        let n = s.len() as f64;
        let ms = s.iter().sum::<f64>() / n;
        let my = self.acc.iter().sum::<f64>() / n;
        let cov: f64 = s.iter().zip(&self.acc).map(|(a, b)| (a - ms) * (b - my)).sum();
        let var: f64 = s.iter().map(|a| (a - ms).powi(2)).sum();
        if var > 1e-300 {
            let a = cov / var;
            (a, my - a * ms)
        } else {
            (0.0, my)
        }
    }
}

impl Objective for SquaredError {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, Some(grad))
    }
}

const SINGLE_EXPONENTS: [f64; 3] = [0.1, 0.3, 0.6];
const SINGLE_OFFSETS: [f64; 3] = [-1.0, 0.0, 1.0];

pub fn fit_single_step(points: &[AccuracyPoint], cfg: &FitConfig) -> Result<SingleStepFit> {
    cfg.validate()?;
    if points.len() < 7 {
        return Err(Error::InsufficientData {
            what: "single-step fit",
            needed: 7,
            got: points.len(),
        });
    }
    if points.iter().any(|p| !p.accuracy.is_finite()) {
        return Err(Error::invalid("single-step accuracies must be finite"));
    }
    let ln_n: Vec<f64> = points.iter().map(|p| (p.n_params as f64).ln()).collect();
    let ln_d: Vec<f64> = points.iter().map(|p| (p.tokens as f64).ln()).collect();
    let (sn, sd) = (
        ln_n.iter().sum::<f64>() / ln_n.len() as f64,
        ln_d.iter().sum::<f64>() / ln_d.len() as f64,
    );
    let obj = SquaredError {
        ln_n: ln_n.iter().map(|v| v - sn).collect(),
        ln_d: ln_d.iter().map(|v| v - sd).collect(),
        acc: points.iter().map(|p| p.accuracy).collect(),
    };

    let c = 0.5f64.ln();
    let mut grid = Vec::new();
    for &alpha in &SINGLE_EXPONENTS {
        for &beta in &SINGLE_EXPONENTS {
            for &e in &SINGLE_OFFSETS {
                let mut x = vec![0.0, 0.0, c, alpha, c, beta, e];
                let (a, b) = obj.linear_part(&x);
                x[0] = a;
                x[1] = b;
                grid.push(x);
            }
        }
    }
    let starts = subsample(&grid, cfg.multistart_count);
    let inf = f64::INFINITY;
    let bounds = Bounds::new(
        vec![-inf, -inf, -inf, 0.0, -inf, 0.0, -inf],
        vec![inf; 7],
    )?;
    let solver = cfg.solver();
    let best = multistart(|s| minimize_bounded(&obj, s, &bounds, &solver), &starts)?;

    let x = &best.params;
    let params = SingleStepParams {
        amplitude: x[0],
        offset: x[1],
        size_coef: (x[2] + x[3] * sn).exp(),
        size_exp: x[3],
        data_coef: (x[4] + x[5] * sd).exp(),
        data_exp: x[5],
        irreducible: x[6],
    };
    let predicted: Vec<f64> = points
        .iter()
        .map(|p| eval_single_step(&params, p.n_params as f64, p.tokens as f64))
        .collect();
    let errs: Vec<f64> = points
        .iter()
        .zip(&predicted)
        .filter(|(p, _)| p.accuracy != 0.0)
        .map(|(p, q)| ((q - p.accuracy) / p.accuracy).abs() * 100.0)
        .collect();
    let avg = errs.iter().sum::<f64>() / errs.len().max(1) as f64;

    let lo = obj.acc.iter().cloned().fold(inf, f64::min);
    let hi = obj.acc.iter().cloned().fold(-inf, f64::max);
    let n_lo = points.iter().map(|p| p.n_params).min().expect("nonempty") as f64;
    let n_hi = points.iter().map(|p| p.n_params).max().expect("nonempty") as f64;
    let d_mid = geometric_mean(points.iter().map(|p| p.tokens as f64));
    let swing = (eval_single_step(&params, n_hi, d_mid) - eval_single_step(&params, n_lo, d_mid)).abs();
    let degenerate = !(hi > lo) || swing < 0.01 * (hi - lo);

    Ok(SingleStepFit {
        params,
        predicted,
        avg_rel_fit_error: avg,
        degenerate,
        optimizer: OptResult {
            degenerate,
            ..best
        },
    })
}

/// [`fit_single_step`] on the last-k mean accuracy of each run.
pub fn fit_single_step_records(records: &[&CheckpointRecord], cfg: &FitConfig) -> Result<SingleStepFit> {
    let points: Vec<AccuracyPoint> = final_accuracy_points(records, cfg.last_k_average)?
        .into_iter()
        .map(|(p, acc)| AccuracyPoint {
            model_id: p.model_id,
            n_params: p.n_params,
            tokens: p.tokens,
            accuracy: acc,
        })
        .collect();
    fit_single_step(&points, cfg)
}
