//! Cross-entropy variant of step 2: `Acc = 1 − a·log σ(−k(CE − CE0))`.
//!
//! With `k > 0` the curve falls as cross-entropy grows only when `a ≤ 0`,
//! which also keeps it at or below the perfect-accuracy asymptote; the fit
//! bounds `a` accordingly.

use serde::{Deserialize, Serialize};

use super::data::{drop_head, median, runs};
use crate::error::{Error, Result};
use crate::optim::{least_squares, multistart, Bounds, LsqOptions, OptResult};
use crate::types::{CheckpointRecord, FitConfig};

/// Share of each run, counted from the start, left out of the fit.
pub const LOG_SIGMOID_HEAD_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSigmoidParams {
    /// a
    pub amplitude: f64,
    /// k
    pub steepness: f64,
    /// CE0
    pub midpoint: f64,
}

impl LogSigmoidParams {
    pub fn formula(&self) -> String {
        format!(
            "Acc(CE) = 1 - {:.2} * log(sigmoid(-{:.2}(CE - {:.2})))",
            self.amplitude, self.steepness, self.midpoint
        )
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn eval_log_sigmoid(p: &LogSigmoidParams, ce: f64) -> f64 {
    // −log σ(−u) = softplus(u)
    1.0 + p.amplitude * softplus(p.steepness * (ce - p.midpoint))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSigmoidFit {
    pub params: LogSigmoidParams,
    /// Percent.
    pub avg_rel_fit_error: f64,
    pub n_points_used: usize,
    pub degenerate: bool,
    pub optimizer: OptResult,
}

/// `(CE, accuracy)` pairs from the later part of each run.
pub fn log_sigmoid_points(records: &[&CheckpointRecord]) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for run in runs(records)?.values() {
        let with_acc: Vec<&CheckpointRecord> = run.iter().copied().filter(|r| r.accuracy.is_some()).collect();
        for r in drop_head(&with_acc, LOG_SIGMOID_HEAD_FRACTION) {
            out.push((r.loss, r.accuracy.expect("filtered")));
        }
    }
    Ok(out)
}

fn model(p: &[f64], ce: &f64) -> f64 {
    1.0 + p[0] * softplus(p[1] * (ce - p[2]))
}

const STEEPNESS_GRID: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];
const MIN_STEEPNESS: f64 = 1e-9;

pub fn fit_log_sigmoid(pairs: &[(f64, f64)], cfg: &FitConfig) -> Result<LogSigmoidFit> {
    cfg.validate()?;
    if pairs.len() < 3 {
        return Err(Error::InsufficientData {
            what: "log-sigmoid fit",
            needed: 3,
            got: pairs.len(),
        });
    }
    if pairs.iter().any(|(c, a)| !c.is_finite() || !a.is_finite()) {
        return Err(Error::invalid("log-sigmoid points must be finite"));
    }
    let ce0 = median(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let starts: Vec<Vec<f64>> = STEEPNESS_GRID
        .iter()
        .map(|&k| {
            let (mut num, mut den) = (0.0, 0.0);
            for &(c, acc) in pairs {
                let s = softplus(k * (c - ce0));
                num += s * (acc - 1.0);
                den += s * s;
            }
            let a = if den > 0.0 { (num / den).min(0.0) } else { 0.0 };
            vec![a, k, ce0]
        })
        .collect();
    let opts = LsqOptions {
        max_iterations: cfg.max_iterations,
        bounds: Some(Bounds::new(
            vec![f64::NEG_INFINITY, MIN_STEEPNESS, f64::NEG_INFINITY],
            vec![0.0, f64::INFINITY, f64::INFINITY],
        )?),
        ..LsqOptions::default()
    };
    let best = multistart(|s| least_squares(model, pairs, s, &opts), &starts)?;
    let params = LogSigmoidParams {
        amplitude: best.params[0],
        steepness: best.params[1],
        midpoint: best.params[2],
    };
    let errs: Vec<f64> = pairs
        .iter()
        .filter(|p| p.1 != 0.0)
        .map(|&(c, acc)| ((eval_log_sigmoid(&params, c) - acc) / acc).abs() * 100.0)
        .collect();
    Ok(LogSigmoidFit {
        params,
        avg_rel_fit_error: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
        n_points_used: pairs.len(),
        degenerate: best.degenerate,
        optimizer: best,
    })
}
