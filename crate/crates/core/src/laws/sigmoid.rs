//! Step 2: `loss → accuracy` via `Acc = a / (1 + e^{−k(L − L0)}) + b`.

use serde::{Deserialize, Serialize};

use super::data::{drop_head, median, runs};
use crate::error::{Error, Result};
use crate::metrics::{moving_average, relative_error};
use crate::optim::{least_squares, multistart, LsqOptions, OptResult};
use crate::types::{CheckpointRecord, FitConfig, SigmoidParams};

pub fn eval_sigmoid(p: &SigmoidParams, loss: f64) -> f64 {
    p.amplitude / (1.0 + (-p.steepness * (loss - p.midpoint)).exp()) + p.offset
}

impl SigmoidParams {
    /// Two-decimal rendering, e.g. `Acc(L) = -0.74 / (1 + exp(-4.83(L - 0.62))) + 1.00`.
    pub fn formula(&self) -> String {
        format!(
            "Acc(L) = {:.2} / (1 + exp(-{:.2}(L - {:.2}))) + {:.2}",
            self.amplitude, self.steepness, self.midpoint, self.offset
        )
    }

    fn from_slice(x: &[f64]) -> Self {
        Self {
            amplitude: x[0],
            offset: x[1],
            steepness: x[2],
            midpoint: x[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step2Fit {
    pub params: SigmoidParams,
    /// Mean relative error over the pooled points, anchor excluded, in percent.
    pub avg_rel_fit_error: f64,
    /// Pooled points including the anchor.
    pub n_points_used: usize,
    pub degenerate: bool,
    pub optimizer: OptResult,
}

fn sigmoid_model(p: &[f64], l: &f64) -> f64 {
    p[0] / (1.0 + (-p[2] * (l - p[3])).exp()) + p[1]
}

/// Pooled `(loss, accuracy)` pairs: per run, head dropped by step and both
/// series smoothed with a trailing moving average.
pub fn step2_points(records: &[&CheckpointRecord], cfg: &FitConfig) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for run in runs(records)?.values() {
        let with_acc: Vec<&CheckpointRecord> = run.iter().copied().filter(|r| r.accuracy.is_some()).collect();
        let kept = drop_head(&with_acc, cfg.discard_head_fraction);
        let losses: Vec<f64> = kept.iter().map(|r| r.loss).collect();
        let accs: Vec<f64> = kept.iter().map(|r| r.accuracy.expect("filtered")).collect();
        let losses = moving_average(&losses, cfg.moving_average_window);
        let accs = moving_average(&accs, cfg.moving_average_window);
        out.extend(losses.into_iter().zip(accs));
    }
    Ok(out)
}

/// Starting points: `L0` at the median loss, `a` the negated accuracy range,
/// `b` the top accuracy and `k` from a linear fit in logit space; then the
/// same with `k` halved and doubled, and a rising-curve mirror.
fn sigmoid_starts(pairs: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let losses: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let lo = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let range = (hi - lo).max(1e-3);
    let l0 = median(&losses);
    let (a, b) = (-range, hi);

    // logit of the fraction of the drop already taken, regressed on loss
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(l, acc) in pairs {
        let u = ((acc - b) / a).clamp(0.01, 0.99);
        let z = (u / (1.0 - u)).ln();
        sx += l;
        sy += z;
        sxx += l * l;
        sxy += l * z;
        n += 1.0;
    }
    let var = sxx - sx * sx / n;
    let slope = if var > 0.0 { (sxy - sx * sy / n) / var } else { 0.0 };
    let k = if slope.is_finite() && slope > 1e-3 { slope } else { 1.0 };

    vec![
        vec![a, b, k, l0],
        vec![a, b, 0.5 * k, l0],
        vec![a, b, 2.0 * k, l0],
        vec![range, lo, k, l0],
    ]
}

/// Fits the sigmoid to pooled pairs, appending `cfg.anchor_point`.
pub fn fit_sigmoid(pairs: &[(f64, f64)], cfg: &FitConfig) -> Result<Step2Fit> {
    cfg.validate()?;
    let mut data: Vec<(f64, f64)> = pairs.to_vec();
    if let Some(anchor) = cfg.anchor_point {
        data.push(anchor);
    }
    if data.len() < 4 {
        return Err(Error::InsufficientData {
            what: "step-2 fit",
            needed: 4,
            got: data.len(),
        });
    }
    if data.iter().any(|(l, a)| !l.is_finite() || !a.is_finite()) {
        return Err(Error::invalid("step-2 points must be finite"));
    }
    let opts = LsqOptions {
        max_iterations: cfg.max_iterations,
        ..LsqOptions::default()
    };
    let starts = sigmoid_starts(pairs);
    let best = multistart(|s| least_squares(sigmoid_model, &data, s, &opts), &starts)?;
    let params = SigmoidParams::from_slice(&best.params).canonical();

    let errs: Vec<f64> = pairs
        .iter()
        .filter(|(_, acc)| *acc != 0.0)
        .map(|&(l, acc)| relative_error(eval_sigmoid(&params, l), acc))
        .collect::<Result<_>>()?;
    let avg = if errs.is_empty() {
        0.0
    } else {
        errs.iter().sum::<f64>() / errs.len() as f64
    };
    Ok(Step2Fit {
        params,
        avg_rel_fit_error: avg,
        n_points_used: data.len(),
        degenerate: best.degenerate,
        optimizer: OptResult {
            params: vec![params.amplitude, params.offset, params.steepness, params.midpoint],
            ..best
        },
    })
}

/// The full step-2 protocol on the checkpoints of every ladder run.
pub fn fit_step2(records: &[&CheckpointRecord], cfg: &FitConfig) -> Result<Step2Fit> {
    fit_sigmoid(&step2_points(records, cfg)?, cfg)
}
