//! Domain types shared by every fitting stage, plus record validation and
//! the ladder arithmetic (Chinchilla token budgets and training FLOPs).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokens per parameter at the compute-optimal ("1xC") budget.
pub const CHINCHILLA_TOKENS_PER_PARAM: f64 = 20.0;

/// Which intermediate quantity a record's `loss` field holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Bits-per-byte of the correct answer.
    #[default]
    BpbCorrect,
    /// Cross-entropy over all answer choices.
    TaskCe,
    /// Held-out language-modeling loss.
    LmLoss,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::BpbCorrect => "bpb_correct",
            FeatureKind::TaskCe => "task_ce",
            FeatureKind::LmLoss => "lm_loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrState {
    pub peak_lr: f64,
    pub current_lr: f64,
}

/// One evaluated checkpoint of one run on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointRecord {
    pub model_id: String,
    /// Non-embedding parameter count.
    pub n_params: u64,
    /// Training tokens consumed up to this checkpoint.
    pub tokens_seen: u64,
    pub step: u64,
    pub task: String,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default)]
    pub feature_kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_state: Option<LrState>,
}

impl CheckpointRecord {
    /// Field names accepted in the JSON Lines format.
    pub const FIELDS: [&'static str; 9] = [
        "model_id",
        "n_params",
        "tokens_seen",
        "step",
        "task",
        "loss",
        "accuracy",
        "feature_kind",
        "lr_state",
    ];

    pub fn flops(&self) -> f64 {
        compute_flops(self.n_params, self.tokens_seen)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub reason: String,
}

impl Violation {
    fn new(index: usize, reason: impl Into<String>) -> Self {
        Self {
            index,
            reason: reason.into(),
        }
    }
}

/// Checks every record invariant and returns all violations found.
///
/// Ordering rules are checked per `(model_id, task, feature_kind)` after
/// sorting by step; a violation is reported against the later record.
pub fn validate_records(records: &[CheckpointRecord]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.model_id.is_empty() {
            out.push(Violation::new(i, "empty model_id"));
        }
        if r.n_params < 1 {
            out.push(Violation::new(i, "n_params must be >= 1"));
        }
        if r.tokens_seen < 1 {
            out.push(Violation::new(i, "tokens_seen must be >= 1"));
        }
        if r.step < 1 {
            out.push(Violation::new(i, "step must be >= 1"));
        }
        if !r.loss.is_finite() || r.loss < 0.0 {
            out.push(Violation::new(i, "loss must be finite and >= 0"));
        }
        if let Some(acc) = r.accuracy {
            if !(0.0..=1.0).contains(&acc) {
                out.push(Violation::new(i, "accuracy out of [0,1]"));
            }
        }
        if let Some(lr) = r.lr_state {
            if !(lr.peak_lr > 0.0) || !lr.peak_lr.is_finite() {
                out.push(Violation::new(i, "lr_state.peak_lr must be > 0"));
            }
            if !(lr.current_lr >= 0.0) || !lr.current_lr.is_finite() {
                out.push(Violation::new(i, "lr_state.current_lr must be >= 0"));
            }
        }
    }

    let mut groups: BTreeMap<(&str, &str, FeatureKind), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups
            .entry((r.model_id.as_str(), r.task.as_str(), r.feature_kind))
            .or_default()
            .push(i);
    }
    for idx in groups.values_mut() {
        idx.sort_by_key(|&i| (records[i].step, i));
        for w in idx.windows(2) {
            let (prev, cur) = (&records[w[0]], &records[w[1]]);
            if cur.step <= prev.step {
                out.push(Violation::new(w[1], "non-increasing step"));
            } else if cur.tokens_seen < prev.tokens_seen {
                out.push(Violation::new(w[1], "tokens_seen decreases as step increases"));
            }
        }
    }
    out.sort_by(|a, b| a.index.cmp(&b.index).then_with(|| a.reason.cmp(&b.reason)));
    out
}

/// `round(20 × multiplier × n_params)`.
pub fn chinchilla_tokens(n_params: u64, multiplier: f64) -> Result<u64> {
    scaled_tokens(n_params, multiplier, CHINCHILLA_TOKENS_PER_PARAM)
}

pub(crate) fn scaled_tokens(n_params: u64, multiplier: f64, tokens_per_param: f64) -> Result<u64> {
    if n_params < 1 || !(multiplier > 0.0) || !(tokens_per_param > 0.0) {
        return Err(Error::invalid(format!(
            "chinchilla_tokens needs n_params >= 1 and positive multipliers (got {n_params}, {multiplier}, {tokens_per_param})"
        )));
    }
    let tokens = (tokens_per_param * multiplier * n_params as f64).round();
    // u64::MAX as f64 rounds up to 2^64, so `>=` is the exact overflow test.
    if !tokens.is_finite() || tokens >= u64::MAX as f64 {
        return Err(Error::TokenOverflow {
            n_params,
            multiplier,
        });
    }
    Ok(tokens as u64)
}

/// Training compute estimate `C ≈ 6·N·D`.
pub fn compute_flops(n_params: u64, tokens: u64) -> f64 {
    6.0 * n_params as f64 * tokens as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub model_id: String,
    pub n_params: u64,
    pub chinchilla_multiplier: f64,
    /// Tokens per optimizer step; used to place checkpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub entries: Vec<LadderEntry>,
    #[serde(default = "default_tokens_per_param")]
    pub tokens_per_param: f64,
}

fn default_tokens_per_param() -> f64 {
    CHINCHILLA_TOKENS_PER_PARAM
}

impl LadderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::invalid("ladder has no entries"));
        }
        for e in &self.entries {
            self.tokens_for(e)?;
            if e.batch_tokens == Some(0) {
                return Err(Error::invalid(format!("{}: batch_tokens must be >= 1", e.model_id)));
            }
        }
        Ok(())
    }

    /// Data size implied by an entry: `tokens_per_param × multiplier × N`.
    pub fn tokens_for(&self, entry: &LadderEntry) -> Result<u64> {
        scaled_tokens(entry.n_params, entry.chinchilla_multiplier, self.tokens_per_param)
    }

    pub fn total_flops(&self) -> Result<f64> {
        self.entries
            .iter()
            .map(|e| Ok(compute_flops(e.n_params, self.tokens_for(e)?)))
            .sum()
    }
}

/// `L(N, D) = A / N^α + B / D^β + E`, all parameters non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawParams {
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

impl PowerLawParams {
    pub fn is_valid(&self) -> bool {
        [
            self.size_coef,
            self.size_exp,
            self.data_coef,
            self.data_exp,
            self.irreducible,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// `Acc(L) = a / (1 + exp(-k (L - L0))) + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidParams {
    /// a
    pub amplitude: f64,
    /// b
    pub offset: f64,
    /// k
    pub steepness: f64,
    /// L0
    pub midpoint: f64,
}

impl SigmoidParams {
    /// Flips to the equivalent parameterization with `steepness >= 0`.
    pub fn canonical(self) -> Self {
        if self.steepness < 0.0 {
            Self {
                amplitude: -self.amplitude,
                offset: self.amplitude + self.offset,
                steepness: -self.steepness,
                midpoint: self.midpoint,
            }
        } else {
            self
        }
    }

    /// Range spanned by the two asymptotes.
    pub fn bounds(&self) -> (f64, f64) {
        let (x, y) = (self.offset, self.offset + self.amplitude);
        (x.min(y), x.max(y))
    }
}

/// Loss-curve parameters: the power law plus the LR-decay coefficient F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub base: PowerLawParams,
    pub decay_coef: f64,
}

/// Knobs for every fitting routine. Defaults follow the reference protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub huber_delta: f64,
    pub last_k_average: usize,
    pub moving_average_window: usize,
    pub discard_head_fraction: f64,
    pub anchor_point: Option<(f64, f64)>,
    pub multistart_count: usize,
    pub max_iterations: usize,
    /// Projected-gradient infinity-norm tolerance.
    pub convergence_tol: f64,
    /// Relative objective-decrease tolerance, measured over 5 iterations.
    pub objective_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            huber_delta: 1e-3,
            last_k_average: 5,
            moving_average_window: 5,
            discard_head_fraction: 0.10,
            anchor_point: Some((0.0, 1.0)),
            multistart_count: 16,
            max_iterations: 1000,
            convergence_tol: 1e-6,
            objective_tol: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.huber_delta > 0.0) {
            return Err(Error::invalid("huber_delta must be > 0"));
        }
        if self.last_k_average < 1 || self.moving_average_window < 1 {
            return Err(Error::invalid("window sizes must be >= 1"));
        }
        if self.multistart_count < 1 || self.max_iterations < 1 {
            return Err(Error::invalid("multistart_count and max_iterations must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.discard_head_fraction) {
            return Err(Error::invalid("discard_head_fraction must be in [0, 1)"));
        }
        if !(self.convergence_tol > 0.0) || !(self.objective_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        Ok(())
    }

    pub fn solver(&self) -> crate::optim::SolverOptions {
        crate::optim::SolverOptions {
            max_iterations: self.max_iterations,
            grad_tol: self.convergence_tol,
            objective_tol: self.objective_tol,
        }
    }
}
