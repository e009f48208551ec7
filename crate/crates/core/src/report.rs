//! CSV tables for predictions, variance, ablations and loss curves.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{variance_flags, AblationSweep, VarianceReport};
use crate::error::{Error, Result};
use crate::metrics::relative_error;

/// Formats with four significant digits; scientific outside `[1e-3, 1e4)`.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-3..4).contains(&mag) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// A model to extrapolate to, optionally with observed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    pub n_params: u64,
    pub tokens: u64,
    pub actual_loss: Option<f64>,
    /// Fraction in [0, 1].
    pub actual_acc: Option<f64>,
}

fn parse_count(field: &str, s: &str) -> Result<u64> {
    if let Ok(v) = s.parse::<u64>() {
        if v >= 1 {
            return Ok(v);
        }
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::invalid(format!("target {field} {s:?} is not a number")))?;
    if !(v >= 1.0) || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(Error::invalid(format!("target {field} {s:?} must be a positive integer")));
    }
    Ok(v as u64)
}

fn parse_opt(field: &str, s: Option<&str>) -> Result<Option<f64>> {
    match s {
        None | Some("") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("target {field} {v:?} is not a number"))),
    }
}

impl FromStr for Target {
    type Err = Error;

    /// `name:N:D[:actual_loss[:actual_acc]]`; counts accept `3.95e12`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=5).contains(&parts.len()) || parts[0].is_empty() {
            return Err(Error::invalid(format!("target {s:?} is not name:N:D[:loss:acc]")));
        }
        Ok(Target {
            name: parts[0].to_string(),
            n_params: parse_count("N", parts[1])?,
            tokens: parse_count("D", parts[2])?,
            actual_loss: parse_opt("loss", parts.get(3).copied())?,
            actual_acc: parse_opt("accuracy", parts.get(4).copied())?,
        })
    }
}

/// One task's outcome for one target. Accuracies are fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCell {
    pub pred_loss: Option<f64>,
    pub pred_acc: Option<f64>,
    pub actual_acc: Option<f64>,
    /// Set when no prediction could be made.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub task: String,
    /// One cell per target, in target order.
    pub cells: Vec<PredictionCell>,
}

/// Task rows with `Pred, Actual, Error, %Error` per target, in accuracy
/// points, followed by an `Average` row of the absolute and relative errors.
pub fn prediction_csv(targets: &[String], rows: &[PredictionRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["Task".to_string()];
    for t in targets {
        for col in ["Pred", "Actual", "Error", "%Error"] {
            header.push(format!("{t} {col}"));
        }
    }
    w.write_record(&header)?;
    let mut abs_sum = vec![(0.0, 0usize); targets.len()];
    let mut rel_sum = vec![0.0; targets.len()];
    for row in rows {
        let mut rec = vec![row.task.clone()];
        for (j, c) in row.cells.iter().enumerate() {
            let pred = c.pred_acc.map(|v| v * 100.0);
            let actual = c.actual_acc.map(|v| v * 100.0);
            rec.push(pred.map(sig4).unwrap_or_default());
            rec.push(actual.map(sig4).unwrap_or_default());
            match (pred, actual) {
                (Some(p), Some(a)) => {
                    let rel = relative_error(p, a)?;
                    abs_sum[j].0 += (p - a).abs();
                    abs_sum[j].1 += 1;
                    rel_sum[j] += rel;
                    rec.push(sig4((p - a).abs()));
                    rec.push(sig4(rel));
                }
                _ => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
        }
        w.write_record(&rec)?;
    }
    let mut avg = vec!["Average".to_string()];
    for j in 0..targets.len() {
        avg.push(String::new());
        avg.push(String::new());
        let (s, n) = abs_sum[j];
        if n > 0 {
            avg.push(sig4(s / n as f64));
            avg.push(sig4(rel_sum[j] / n as f64));
        } else {
            avg.push(String::new());
            avg.push(String::new());
        }
    }
    w.write_record(&avg)?;
    finish(w)
}

/// One row per task with above-mean flags for each spread column.
pub fn variance_csv(rows: &[VarianceReport], n: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let cols = [
        format!("Loss SD{n}"),
        format!("Loss Rel SD{n} (%)"),
        format!("Acc SD{n}"),
        format!("Acc Rel SD{n} (%)"),
    ];
    let mut header = vec!["Task".to_string(), "Model".to_string()];
    header.extend(cols.iter().cloned());
    header.extend(cols.iter().map(|c| format!("{c} above mean")));
    w.write_record(&header)?;
    for (r, flags) in rows.iter().zip(variance_flags(rows)) {
        let mut rec = vec![r.task.clone(), r.model_id.clone()];
        rec.extend([r.loss_sd_n, r.loss_rel_sd_n, r.acc_sd_n, r.acc_rel_sd_n].map(sig4));
        rec.extend(flags.map(|f| f.to_string()));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn ablation_csv(sweep: &AblationSweep) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "Cumulative FLOPs",
        "Models",
        "Included",
        "Step 1 %Error",
        "Step 2 %Error",
        "Chained %Error",
    ])?;
    for p in &sweep.points {
        w.write_record([
            sig4(p.cumulative_flops),
            p.models_included.len().to_string(),
            p.models_included.join(";"),
            sig4(p.step1_rel_err),
            sig4(p.step2_rel_err),
            sig4(p.chained_rel_err),
        ])?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub model: String,
    pub step: u64,
    pub tokens: u64,
    pub decayed_fraction: f64,
    pub pred_loss: f64,
    pub actual_loss: Option<f64>,
    pub pred_acc: Option<f64>,
    pub actual_acc: Option<f64>,
}

pub fn curve_csv(rows: &[CurveRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "Model",
        "Step",
        "Tokens",
        "H",
        "Pred Loss",
        "Actual Loss",
        "Loss %Error",
        "Pred Acc",
        "Actual Acc",
    ])?;
    for r in rows {
        let loss_err = match r.actual_loss {
            Some(a) => sig4(relative_error(r.pred_loss, a)?),
            None => String::new(),
        };
        let opt = |v: Option<f64>| v.map(sig4).unwrap_or_default();
        w.write_record([
            r.model.clone(),
            r.step.to_string(),
            r.tokens.to_string(),
            sig4(r.decayed_fraction),
            sig4(r.pred_loss),
            opt(r.actual_loss),
            loss_err,
            opt(r.pred_acc),
            opt(r.actual_acc),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
