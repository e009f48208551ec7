//! Turning raw checkpoint records into fitting points.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::last_k_mean;
use crate::types::{CheckpointRecord, FeatureKind};

/// One `(N, D, L)` observation, with the decayed-LR fraction for curve fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub model_id: String,
    pub n_params: u64,
    pub tokens: u64,
    pub loss: f64,
    #[serde(default)]
    pub decayed: f64,
}

impl LossPoint {
    pub fn new(model_id: impl Into<String>, n_params: u64, tokens: u64, loss: f64) -> Self {
        Self {
            model_id: model_id.into(),
            n_params,
            tokens,
            loss,
            decayed: 0.0,
        }
    }
}

/// Records matching `task` and `kind`, or [`Error::NoRecordsForTask`].
pub fn select<'a>(
    records: &'a [CheckpointRecord],
    task: &str,
    kind: FeatureKind,
) -> Result<Vec<&'a CheckpointRecord>> {
    let out: Vec<_> = records
        .iter()
        .filter(|r| r.task == task && r.feature_kind == kind)
        .collect();
    if out.is_empty() {
        return Err(Error::NoRecordsForTask(task.to_string()));
    }
    Ok(out)
}

/// Groups records into runs keyed by model id, each sorted by step.
///
/// All records must share one task and feature kind.
pub fn runs<'a>(records: &[&'a CheckpointRecord]) -> Result<BTreeMap<String, Vec<&'a CheckpointRecord>>> {
    let mut out: BTreeMap<String, Vec<&CheckpointRecord>> = BTreeMap::new();
    let mut key: Option<(&str, FeatureKind)> = None;
    for &r in records {
        match key {
            None => key = Some((r.task.as_str(), r.feature_kind)),
            Some((t, k)) if t != r.task || k != r.feature_kind => {
                return Err(Error::invalid(format!(
                    "records mix tasks or features ({t}/{} and {}/{}); filter first",
                    k.as_str(),
                    r.task,
                    r.feature_kind.as_str()
                )))
            }
            _ => {}
        }
        out.entry(r.model_id.clone()).or_default().push(r);
    }
    for run in out.values_mut() {
        run.sort_by_key(|r| r.step);
        let n = run[0].n_params;
        if run.iter().any(|r| r.n_params != n) {
            return Err(Error::invalid(format!(
                "model {} reports more than one n_params",
                run[0].model_id
            )));
        }
    }
    Ok(out)
}

/// One point per run: final token count and the mean loss over the last
/// `k` checkpoints.
pub fn final_loss_points(records: &[&CheckpointRecord], k: usize) -> Result<Vec<LossPoint>> {
    runs(records)?
        .into_iter()
        .map(|(id, run)| {
            let last = run.last().expect("runs are nonempty");
            let losses: Vec<f64> = run.iter().map(|r| r.loss).collect();
            Ok(LossPoint::new(id, last.n_params, last.tokens_seen, last_k_mean(&losses, k)?))
        })
        .collect()
}

/// Final `(N, D, accuracy)` per run, accuracy averaged over the last `k`
/// checkpoints that carry one.
pub fn final_accuracy_points(records: &[&CheckpointRecord], k: usize) -> Result<Vec<(LossPoint, f64)>> {
    let mut out = Vec::new();
    for (id, run) in runs(records)? {
        let accs: Vec<f64> = run.iter().filter_map(|r| r.accuracy).collect();
        if accs.is_empty() {
            continue;
        }
        let last = run.last().expect("runs are nonempty");
        let losses: Vec<f64> = run.iter().map(|r| r.loss).collect();
        let p = LossPoint::new(id, last.n_params, last.tokens_seen, last_k_mean(&losses, k)?);
        out.push((p, last_k_mean(&accs, k)?));
    }
    Ok(out)
}

/// Drops each run's checkpoints with `step < fraction × final step`.
pub fn drop_head<'a>(run: &[&'a CheckpointRecord], fraction: f64) -> Vec<&'a CheckpointRecord> {
    let Some(last) = run.last() else {
        return Vec::new();
    };
    let cutoff = fraction * last.step as f64;
    run.iter().copied().filter(|r| r.step as f64 >= cutoff).collect()
}

/// Geometric mean of positive values.
pub(crate) fn geometric_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v.ln(), n + 1));
    (sum / n.max(1) as f64).exp()
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
