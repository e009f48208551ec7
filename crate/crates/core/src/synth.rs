//! Synthetic ladder runs drawn from known scaling-law parameters.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{eval_curve, LRSchedule};
use crate::error::{Error, Result};
use crate::laws::eval_sigmoid;
use crate::types::{
    CheckpointRecord, CurveParams, FeatureKind, LadderEntry, LadderSpec, LrState, PowerLawParams, SigmoidParams,
};

/// Steps per run when a ladder entry has no batch size.
pub const DEFAULT_RUN_STEPS: u64 = 10_000;
/// Peak learning rate of the schedule used when none is given.
pub const DEFAULT_PEAK_LR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// σ of the multiplicative log-normal loss noise.
    pub loss_lognormal_sigma: f64,
    /// σ of the additive accuracy noise (clamped to [0, 1]).
    pub acc_gaussian_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub truth_step1: PowerLawParams,
    pub truth_step2: SigmoidParams,
    #[serde(rename = "truth_F", default)]
    pub truth_decay_coef: f64,
    pub ladder: LadderSpec,
    /// Per-model schedules; models without one train at a constant rate
    /// after a 1% warmup.
    #[serde(default)]
    pub schedules: BTreeMap<String, LRSchedule>,
    pub checkpoints_per_run: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_task")]
    pub task: String,
}

fn default_task() -> String {
    "synthetic".into()
}

impl GeneratorSpec {
    pub fn new(truth_step1: PowerLawParams, truth_step2: SigmoidParams, ladder: LadderSpec) -> Self {
        Self {
            truth_step1,
            truth_step2,
            truth_decay_coef: 0.0,
            ladder,
            schedules: BTreeMap::new(),
            checkpoints_per_run: 20,
            noise: NoiseSpec::default(),
            seed: 0,
            task: default_task(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ladder.validate()?;
        let sig = [self.noise.loss_lognormal_sigma, self.noise.acc_gaussian_sigma];
        if sig.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid("noise sigmas must be finite and >= 0"));
        }
        if !self.truth_step1.is_valid() {
            return Err(Error::invalid("truth_step1 must have finite non-negative parameters"));
        }
        if !(self.truth_decay_coef >= 0.0) || !self.truth_decay_coef.is_finite() {
            return Err(Error::invalid("truth_F must be finite and >= 0"));
        }
        if self.checkpoints_per_run < 1 {
            return Err(Error::invalid("checkpoints_per_run must be >= 1"));
        }
        for s in self.schedules.values() {
            s.validate()?;
        }
        Ok(())
    }

    pub fn truth_curve(&self) -> CurveParams {
        CurveParams {
            base: self.truth_step1,
            decay_coef: self.truth_decay_coef,
        }
    }

    /// Tokens per step and total steps for a ladder entry.
    pub fn run_shape(&self, entry: &LadderEntry) -> Result<(u64, u64)> {
        let total = self.ladder.tokens_for(entry)?;
        let batch = entry.batch_tokens.unwrap_or_else(|| total.div_ceil(DEFAULT_RUN_STEPS).max(1));
        Ok((batch, total.div_ceil(batch)))
    }

    /// The schedule a model trains under.
    pub fn schedule_for(&self, entry: &LadderEntry) -> Result<LRSchedule> {
        if let Some(s) = self.schedules.get(&entry.model_id) {
            return Ok(*s);
        }
        let (_, steps) = self.run_shape(entry)?;
        Ok(LRSchedule::constant(DEFAULT_PEAK_LR, steps / 100))
    }
}

/// Checkpoint steps spread evenly up to the final step, which is always
/// included.
pub fn checkpoint_steps(total_steps: u64, count: usize) -> Vec<u64> {
    let mut steps: Vec<u64> = (1..=count as u64)
        .map(|i| ((total_steps as u128 * i as u128) / count as u128) as u64)
        .filter(|s| *s > 0)
        .collect();
    steps.dedup();
    steps
}

/// Records for every ladder model, ordered by ladder entry then step.
pub fn generate(spec: &GeneratorSpec) -> Result<Vec<CheckpointRecord>> {
    spec.validate()?;
    let per_model: Vec<Result<Vec<CheckpointRecord>>> = spec
        .ladder
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, entry)| generate_run(spec, i as u64, entry))
        .collect();
    let mut out = Vec::new();
    for r in per_model {
        out.extend(r?);
    }
    Ok(out)
}

fn generate_run(spec: &GeneratorSpec, index: u64, entry: &LadderEntry) -> Result<Vec<CheckpointRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let total = spec.ladder.tokens_for(entry)?;
    let (batch, steps) = spec.run_shape(entry)?;
    let schedule = spec.schedule_for(entry)?;
    let curve = spec.truth_curve();
    let n = entry.n_params as f64;
    checkpoint_steps(steps, spec.checkpoints_per_run)
        .into_iter()
        .map(|step| {
            let tokens = step.saturating_mul(batch).min(total);
            let point = schedule.point(step);
            let true_loss = eval_curve(&curve, n, tokens as f64, point.decayed_fraction);
            if !(true_loss > 0.0) {
                return Err(Error::NonPositiveLoss {
                    model_id: entry.model_id.clone(),
                    value: true_loss,
                });
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            let z_acc: f64 = StandardNormal.sample(&mut rng);
            let loss = true_loss * (spec.noise.loss_lognormal_sigma * z).exp();
            let acc = eval_sigmoid(&spec.truth_step2, true_loss) + spec.noise.acc_gaussian_sigma * z_acc;
            Ok(CheckpointRecord {
                model_id: entry.model_id.clone(),
                n_params: entry.n_params,
                tokens_seen: tokens,
                step,
                task: spec.task.clone(),
                loss,
                accuracy: Some(acc.clamp(0.0, 1.0)),
                feature_kind: FeatureKind::BpbCorrect,
                lr_state: Some(LrState {
                    peak_lr: schedule.peak_lr,
                    current_lr: point.lr,
                }),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::eval_power_law;
    use crate::types::validate_records;

    fn ladder() -> LadderSpec {
        let mut entries = Vec::new();
        for (i, n) in [2e7 as u64, 5e7 as u64, 1e8 as u64, 3e8 as u64].into_iter().enumerate() {
            for m in [1.0, 2.0, 5.0] {
                entries.push(LadderEntry {
                    model_id: format!("m{i}-{m}x"),
                    n_params: n,
                    chinchilla_multiplier: m,
                    batch_tokens: None,
                });
            }
        }
        LadderSpec {
            entries,
            tokens_per_param: 20.0,
        }
    }

    fn spec() -> GeneratorSpec {
        GeneratorSpec::new(
            PowerLawParams {
                size_coef: 38.07,
                size_exp: 0.23,
                data_coef: 100.09,
                data_exp: 0.24,
                irreducible: 0.45,
            },
            SigmoidParams {
                amplitude: -0.74,
                offset: 1.0,
                steepness: 4.83,
                midpoint: 0.62,
            },
            ladder(),
        )
    }

    #[test]
    fn zero_noise_constant_schedule_is_exact() {
        let s = spec();
        for r in generate(&s).unwrap() {
            let want = eval_power_law(&s.truth_step1, r.n_params as f64, r.tokens_seen as f64);
            assert!((r.loss - want).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_output_is_repeatable() {
        let mut s = spec();
        s.noise = NoiseSpec {
            loss_lognormal_sigma: 0.01,
            acc_gaussian_sigma: 0.01,
        };
        s.seed = 7;
        let a = serde_json::to_string(&generate(&s).unwrap()).unwrap();
        let b = serde_json::to_string(&generate(&s).unwrap()).unwrap();
        assert_eq!(a, b);
        s.seed = 8;
        assert_ne!(a, serde_json::to_string(&generate(&s).unwrap()).unwrap());
    }

    #[test]
    fn log_noise_has_requested_spread() {
        let mut s = spec();
        s.checkpoints_per_run = 1000;
        s.noise.loss_lognormal_sigma = 0.01;
        s.seed = 3;
        let recs = generate(&s).unwrap();
        assert!(recs.len() >= 10_000);
        let res: Vec<f64> = recs
            .iter()
            .map(|r| (r.loss / eval_power_law(&s.truth_step1, r.n_params as f64, r.tokens_seen as f64)).ln())
            .collect();
        let m = res.len() as f64;
        let mean = res.iter().sum::<f64>() / m;
        let sd = (res.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        assert!((0.009..=0.011).contains(&sd), "{sd}");
    }

    #[test]
    fn generated_records_validate() {
        let mut s = spec();
        s.noise = NoiseSpec {
            loss_lognormal_sigma: 0.02,
            acc_gaussian_sigma: 0.05,
        };
        assert!(validate_records(&generate(&s).unwrap()).is_empty());
    }

    #[test]
    fn zero_decay_coef_ignores_schedule() {
        let constant = spec();
        let mut cosine = spec();
        for e in &cosine.ladder.entries {
            let (_, steps) = cosine.run_shape(e).unwrap();
            cosine.schedules.insert(e.model_id.clone(), LRSchedule::cosine(1e-3, steps / 100, steps));
        }
        let a: Vec<f64> = generate(&constant).unwrap().iter().map(|r| r.loss).collect();
        let b: Vec<f64> = generate(&cosine).unwrap().iter().map(|r| r.loss).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_cosine_runs_are_non_increasing() {
        let mut s = spec();
        s.truth_decay_coef = 0.05;
        for e in &s.ladder.entries.clone() {
            let (_, steps) = s.run_shape(e).unwrap();
            s.schedules.insert(e.model_id.clone(), LRSchedule::cosine(1e-3, steps / 50, steps));
        }
        let recs = generate(&s).unwrap();
        for w in recs.windows(2) {
            if w[0].model_id == w[1].model_id {
                assert!(w[1].loss <= w[0].loss);
            }
        }
    }

    #[test]
    fn checkpoint_steps_end_at_total() {
        assert_eq!(checkpoint_steps(10, 4), vec![2, 5, 7, 10]);
        assert_eq!(checkpoint_steps(3, 10), vec![1, 2, 3]);
    }
}
