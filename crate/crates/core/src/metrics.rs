//! Task metrics computed from per-choice losses, plus the smoothing and
//! error helpers used by the fitting protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-instance scores for one multiple-choice problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskInstanceScores {
    /// Negative log-likelihood of each answer choice, in nats.
    pub choice_nll_nats: Vec<f64>,
    /// UTF-8 byte length of each answer string.
    pub choice_bytes: Vec<u64>,
    pub correct_index: usize,
}

impl TaskInstanceScores {
    pub fn validate(&self) -> Result<()> {
        let k = self.choice_nll_nats.len();
        if k == 0 || k != self.choice_bytes.len() {
            return Err(Error::invalid(
                "choice_nll_nats and choice_bytes must be nonempty and the same length",
            ));
        }
        if self.correct_index >= k {
            return Err(Error::invalid(format!(
                "correct_index {} out of range for {k} choices",
                self.correct_index
            )));
        }
        if self.choice_bytes.contains(&0) {
            return Err(Error::invalid("choice byte lengths must be >= 1"));
        }
        if self.choice_nll_nats.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("choice nll is NaN"));
        }
        Ok(())
    }
}

/// How per-choice losses are compared in ranked classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    #[default]
    PerByte,
}

/// `nll / (ln 2 × bytes)`.
pub fn bits_per_byte(nll_nats: f64, n_bytes: u64) -> Result<f64> {
    if n_bytes == 0 {
        return Err(Error::invalid("bits_per_byte: n_bytes must be >= 1"));
    }
    Ok(nll_nats / (std::f64::consts::LN_2 * n_bytes as f64))
}

/// Fraction of instances whose lowest-loss choice is the labeled one.
/// Ties go to the lowest index.
pub fn rc_accuracy(instances: &[TaskInstanceScores], normalize: Normalization) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::invalid("rc_accuracy: no instances"));
    }
    let mut hits = 0usize;
    for inst in instances {
        inst.validate()?;
        let score = |k: usize| match normalize {
            Normalization::None => inst.choice_nll_nats[k],
            Normalization::PerByte => inst.choice_nll_nats[k] / inst.choice_bytes[k] as f64,
        };
        let mut best = 0;
        for k in 1..inst.choice_nll_nats.len() {
            if score(k) < score(best) {
                best = k;
            }
        }
        if best == inst.correct_index {
            hits += 1;
        }
    }
    Ok(hits as f64 / instances.len() as f64)
}

/// Mean over instances of `L_correct + log Σ_k exp(-L_k)`.
pub fn task_cross_entropy(instances: &[TaskInstanceScores]) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::invalid("task_cross_entropy: no instances"));
    }
    let mut total = 0.0;
    for inst in instances {
        inst.validate()?;
        let logits = inst.choice_nll_nats.iter().map(|l| -l);
        let shift = logits.clone().fold(f64::NEG_INFINITY, f64::max);
        let lse = shift + logits.map(|z| (z - shift).exp()).sum::<f64>().ln();
        total += inst.choice_nll_nats[inst.correct_index] + lse;
    }
    Ok(total / instances.len() as f64)
}

/// `|pred − actual| / actual × 100`.
pub fn relative_error(pred: f64, actual: f64) -> Result<f64> {
    if actual == 0.0 {
        return Err(Error::invalid("relative_error: actual is zero"));
    }
    Ok((pred - actual).abs() / actual.abs() * 100.0)
}

/// Trailing moving average; early elements average over the available prefix.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    for i in 0..series.len() {
        let lo = (i + 1).saturating_sub(window);
        let slice = &series[lo..=i];
        out.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    out
}

/// Mean of the final `min(k, len)` elements.
pub fn last_k_mean(series: &[f64], k: usize) -> Result<f64> {
    if series.is_empty() || k == 0 {
        return Err(Error::invalid("last_k_mean: empty series or k = 0"));
    }
    let tail = &series[series.len().saturating_sub(k)..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}
