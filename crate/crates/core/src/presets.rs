//! The reference ladder, its target models, and published per-task fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curves::LRSchedule;
use crate::types::{LadderEntry, LadderSpec, PowerLawParams, SigmoidParams};

const LADDER_JSON: &str = include_str!("../presets/ladder.json");
const FITS_JSON: &str = include_str!("../presets/published_fits.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub n_params: u64,
    pub batch_tokens: u64,
    pub peak_lr: f64,
    pub warmup_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPreset {
    pub name: String,
    pub n_params: u64,
    pub tokens: u64,
    pub batch_tokens: u64,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    /// Observed accuracy per task, as a fraction.
    pub actual_accuracy: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPreset {
    pub tokens_per_param: f64,
    pub multipliers: Vec<f64>,
    pub models: Vec<ModelConfig>,
    pub targets: Vec<TargetPreset>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedFit {
    pub step1: PowerLawParams,
    pub step2: SigmoidParams,
}

pub fn ladder_preset() -> LadderPreset {
    serde_json::from_str(LADDER_JSON).expect("bundled ladder preset parses")
}

/// Every model size at every multiplier, ids like `190M-2xC`.
pub fn ladder() -> LadderSpec {
    let p = ladder_preset();
    let mut entries = Vec::new();
    for m in &p.models {
        for &mult in &p.multipliers {
            entries.push(LadderEntry {
                model_id: entry_id(&m.name, mult),
                n_params: m.n_params,
                chinchilla_multiplier: mult,
                batch_tokens: Some(m.batch_tokens),
            });
        }
    }
    LadderSpec {
        entries,
        tokens_per_param: p.tokens_per_param,
    }
}

pub fn entry_id(size: &str, multiplier: f64) -> String {
    format!("{size}-{multiplier}xC")
}

pub fn targets() -> Vec<TargetPreset> {
    ladder_preset().targets
}

pub fn target(name: &str) -> Option<TargetPreset> {
    targets().into_iter().find(|t| t.name == name)
}

/// Per-entry schedules: the model's peak rate and warmup, either held
/// constant or decayed by cosine to the end of the run.
pub fn ladder_schedules(cosine: bool) -> BTreeMap<String, LRSchedule> {
    let p = ladder_preset();
    let spec = ladder();
    let mut out = BTreeMap::new();
    for m in &p.models {
        for &mult in &p.multipliers {
            let id = entry_id(&m.name, mult);
            let entry = spec.entries.iter().find(|e| e.model_id == id).expect("entry exists");
            let total = spec.tokens_for(entry).expect("preset sizes fit").div_ceil(m.batch_tokens);
            let s = if cosine {
                LRSchedule::cosine(m.peak_lr, m.warmup_steps, total)
            } else {
                LRSchedule::constant(m.peak_lr, m.warmup_steps)
            };
            out.insert(id, s);
        }
    }
    out
}

pub fn published_fits() -> BTreeMap<String, PublishedFit> {
    serde_json::from_str(FITS_JSON).expect("bundled fits parse")
}
