//! Predictability diagnostics (checkpoint-to-checkpoint spread, its
//! correlation with prediction error) and ladder ablations.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::laws::data::{final_loss_points, runs};
use crate::laws::{chain_predict, eval_power_law, eval_sigmoid, fit_step1, fit_step2};
use crate::metrics::relative_error;
use crate::types::{compute_flops, CheckpointRecord, FitConfig, CHINCHILLA_TOKENS_PER_PARAM};

/// Sample standard deviation (n − 1 divisor) of the final `min(n, len)`
/// values and that deviation as a percentage of their mean.
pub fn sd_last_n(series: &[f64], n: usize) -> Result<(f64, f64)> {
    let tail = &series[series.len().saturating_sub(n)..];
    if tail.len() < 2 {
        return Err(Error::InsufficientData {
            what: "standard deviation",
            needed: 2,
            got: tail.len(),
        });
    }
    let m = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / m;
    let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let sd = var.sqrt();
    if mean == 0.0 {
        return Err(Error::invalid("relative standard deviation is undefined for a zero mean"));
    }
    Ok((sd, sd / mean * 100.0))
}

/// Sample Pearson correlation and its two-sided p-value from a t-test with
/// `n − 2` degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("pearson: lengths differ ({} vs {})", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "pearson correlation",
            needed: 3,
            got: n,
        });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if !(sxx > 0.0) || !(syy > 0.0) {
        return Err(Error::invalid("pearson: a variable has zero variance"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::invalid(e.to_string()))?;
        (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0)
    };
    Ok((r, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub task: String,
    pub model_id: String,
    pub loss_sd_n: f64,
    /// Percent.
    pub loss_rel_sd_n: f64,
    pub acc_sd_n: f64,
    /// Percent.
    pub acc_rel_sd_n: f64,
    pub n_checkpoints: usize,
}

/// Spread of loss and accuracy over the final `n` checkpoints of the run
/// with the largest final compute. Records must cover one task.
pub fn variance_report(records: &[&CheckpointRecord], n: usize) -> Result<VarianceReport> {
    let grouped = runs(records)?;
    let (model_id, run) = grouped
        .iter()
        .max_by(|a, b| {
            let ca = compute_of(a.1);
            let cb = compute_of(b.1);
            ca.total_cmp(&cb).then_with(|| b.0.cmp(a.0))
        })
        .ok_or_else(|| Error::invalid("variance report needs at least one record"))?;
    let tail = &run[run.len().saturating_sub(n)..];
    let losses: Vec<f64> = tail.iter().map(|r| r.loss).collect();
    let accs: Vec<f64> = tail
        .iter()
        .map(|r| {
            r.accuracy
                .ok_or_else(|| Error::invalid(format!("model {model_id} step {} has no accuracy", r.step)))
        })
        .collect::<Result<_>>()?;
    let (loss_sd, loss_rel) = sd_last_n(&losses, n)?;
    let (acc_sd, acc_rel) = sd_last_n(&accs, n)?;
    Ok(VarianceReport {
        task: tail[0].task.clone(),
        model_id: model_id.clone(),
        loss_sd_n: loss_sd,
        loss_rel_sd_n: loss_rel,
        acc_sd_n: acc_sd,
        acc_rel_sd_n: acc_rel,
        n_checkpoints: tail.len(),
    })
}

fn compute_of(run: &[&CheckpointRecord]) -> f64 {
    let last = run.last().expect("runs are nonempty");
    compute_flops(last.n_params, last.tokens_seen)
}

/// Marks values strictly above the mean of their column.
pub fn above_mean(values: &[f64]) -> Vec<bool> {
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    values.iter().map(|v| *v > mean).collect()
}

/// Per-row flags for the four spread columns of a variance table.
pub fn variance_flags(rows: &[VarianceReport]) -> Vec<[bool; 4]> {
    let cols = [
        above_mean(&rows.iter().map(|r| r.loss_sd_n).collect::<Vec<_>>()),
        above_mean(&rows.iter().map(|r| r.loss_rel_sd_n).collect::<Vec<_>>()),
        above_mean(&rows.iter().map(|r| r.acc_sd_n).collect::<Vec<_>>()),
        above_mean(&rows.iter().map(|r| r.acc_rel_sd_n).collect::<Vec<_>>()),
    ];
    (0..rows.len()).map(|i| [cols[0][i], cols[1][i], cols[2][i], cols[3][i]]).collect()
}

/// A target model with its observed final loss and accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationTarget {
    pub n_params: u64,
    pub tokens: u64,
    pub actual_loss: f64,
    pub actual_acc: f64,
}

/// Percent errors of the two-step pipeline against a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineErrors {
    pub pred_loss: f64,
    pub pred_acc: f64,
    pub step1_rel_err: f64,
    /// Step 2 evaluated at the target's actual loss.
    pub step2_rel_err: f64,
    pub chained_rel_err: f64,
}

/// Fits both steps on `records` (one task) and scores the target.
pub fn pipeline_errors(
    records: &[&CheckpointRecord],
    target: &AblationTarget,
    cfg: &FitConfig,
) -> Result<PipelineErrors> {
    let s1 = fit_step1(&final_loss_points(records, cfg.last_k_average)?, cfg)?;
    let s2 = fit_step2(records, cfg)?;
    let (n, d) = (target.n_params as f64, target.tokens as f64);
    let (pred_loss, pred_acc) = chain_predict(&s1, &s2, n, d)?;
    debug_assert_eq!(pred_loss, eval_power_law(&s1.params, n, d));
    Ok(PipelineErrors {
        pred_loss,
        pred_acc,
        step1_rel_err: relative_error(pred_loss, target.actual_loss)?,
        step2_rel_err: relative_error(eval_sigmoid(&s2.params, target.actual_loss), target.actual_acc)?,
        chained_rel_err: relative_error(pred_acc, target.actual_acc)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub cumulative_flops: f64,
    pub models_included: Vec<String>,
    pub step1_rel_err: f64,
    pub step2_rel_err: f64,
    pub chained_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSweep {
    pub points: Vec<AblationPoint>,
    /// One note per prefix that could not be evaluated.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    ModelSize,
    ChinchillaMult,
}

struct RunSummary<'a> {
    model_id: String,
    n_params: u64,
    multiplier: f64,
    flops: f64,
    records: Vec<&'a CheckpointRecord>,
}

fn summarize<'a>(records: &[&'a CheckpointRecord]) -> Result<Vec<RunSummary<'a>>> {
    Ok(runs(records)?
        .into_iter()
        .map(|(id, run)| {
            let last = run.last().expect("runs are nonempty");
            let mult = last.tokens_seen as f64 / (CHINCHILLA_TOKENS_PER_PARAM * last.n_params as f64);
            RunSummary {
                model_id: id,
                n_params: last.n_params,
                multiplier: (mult * 10.0).round() / 10.0,
                flops: compute_flops(last.n_params, last.tokens_seen),
                records: run,
            }
        })
        .collect())
}

/// Evaluates each prefix (a list of run indices) concurrently, keeping
/// prefix order in the output.
fn sweep(runs: &[RunSummary<'_>], prefixes: Vec<Vec<usize>>, target: &AblationTarget, cfg: &FitConfig) -> AblationSweep {
    let results: Vec<std::result::Result<AblationPoint, String>> = prefixes
        .par_iter()
        .map(|idx| {
            let included: Vec<&RunSummary> = idx.iter().map(|&i| &runs[i]).collect();
            let label = format!("prefix of {} runs", included.len());
            let distinct: BTreeSet<(u64, u64)> = included
                .iter()
                .map(|r| (r.n_params, r.records.last().expect("nonempty").tokens_seen))
                .collect();
            if distinct.len() < 5 {
                return Err(format!("{label}: {} distinct (N, D) points, need 5", distinct.len()));
            }
            let recs: Vec<&CheckpointRecord> = included.iter().flat_map(|r| r.records.iter().copied()).collect();
            let errs = pipeline_errors(&recs, target, cfg).map_err(|e| format!("{label}: {e}"))?;
            Ok(AblationPoint {
                cumulative_flops: included.iter().map(|r| r.flops).sum(),
                models_included: included.iter().map(|r| r.model_id.clone()).collect(),
                step1_rel_err: errs.step1_rel_err,
                step2_rel_err: errs.step2_rel_err,
                chained_rel_err: errs.chained_rel_err,
            })
        })
        .collect();
    let mut out = AblationSweep {
        points: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        match r {
            Ok(p) => out.points.push(p),
            Err(note) => out.skipped.push(note),
        }
    }
    out
}

/// Adds runs one at a time in order of training compute.
pub fn ablate_by_flops(records: &[&CheckpointRecord], target: &AblationTarget, cfg: &FitConfig) -> Result<AblationSweep> {
    cfg.validate()?;
    let mut runs = summarize(records)?;
    runs.sort_by(|a, b| a.flops.total_cmp(&b.flops).then_with(|| a.model_id.cmp(&b.model_id)));
    let prefixes = (1..=runs.len()).map(|k| (0..k).collect()).collect();
    Ok(sweep(&runs, prefixes, target, cfg))
}

/// Includes every run up to each distinct value along `axis`.
pub fn ablate_by_axis(
    records: &[&CheckpointRecord],
    axis: AblationAxis,
    target: &AblationTarget,
    cfg: &FitConfig,
) -> Result<AblationSweep> {
    cfg.validate()?;
    let runs = summarize(records)?;
    let key = |r: &RunSummary| match axis {
        AblationAxis::ModelSize => r.n_params as f64,
        AblationAxis::ChinchillaMult => r.multiplier,
    };
    let mut values: Vec<f64> = runs.iter().map(key).collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup();
    let prefixes = values
        .iter()
        .map(|&v| (0..runs.len()).filter(|&i| key(&runs[i]) <= v).collect())
        .collect();
    Ok(sweep(&runs, prefixes, target, cfg))
}
