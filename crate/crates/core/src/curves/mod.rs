//! Loss curves across training: `L = A/N^α + B/D^β + E − F·H` with `H` the
//! fraction of the peak learning rate already decayed.

mod schedule;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use schedule::{LRSchedule, SchedulePoint, ScheduleKind};

use crate::error::{Error, Result};
use crate::laws::data::{runs, LossPoint};
use crate::laws::{eval_power_law, eval_sigmoid, LogHuberObjective, LossFit, Step2Fit};
use crate::optim::{minimize_bounded, multistart, OptResult};
use crate::types::{CheckpointRecord, CurveParams, FitConfig, PowerLawParams, SigmoidParams};

/// Default warmup exclusion for runs whose learning rate decays.
pub const COSINE_WARMUP_EXCLUSION: u64 = 5000;
/// Default warmup exclusion for constant-LR runs.
pub const CONSTANT_WARMUP_EXCLUSION: u64 = 3000;

pub type CurveFit = LossFit<CurveParams>;

pub fn eval_curve(p: &CurveParams, n: f64, d: f64, h: f64) -> f64 {
    eval_power_law(&p.base, n, d) - p.decay_coef * h
}

impl CurveParams {
    pub fn formula(&self) -> String {
        let b = &self.base;
        format!(
            "L(N, D, H) = {:.2} / N^{:.2} + {:.2} / D^{:.2} + {:.2} - {:.4} * H",
            b.size_coef, b.size_exp, b.data_coef, b.data_exp, b.irreducible, self.decay_coef
        )
    }
}

/// Per-checkpoint `(step, point)` pairs with `H` filled in.
///
/// A schedule supplied for a model wins over the records' `lr_state`; from
/// `lr_state` alone `H = (peak − current) / peak`, except that checkpoints
/// followed by a higher rate count as warmup with `H = 0`.
pub fn curve_points(
    records: &[&CheckpointRecord],
    schedules: &BTreeMap<String, LRSchedule>,
) -> Result<Vec<(u64, LossPoint)>> {
    let mut out = Vec::new();
    for (id, run) in runs(records)? {
        // highest learning rate at or after each checkpoint
        let mut later_max = vec![f64::NEG_INFINITY; run.len() + 1];
        for (i, r) in run.iter().enumerate().rev() {
            let lr = r.lr_state.map_or(f64::NEG_INFINITY, |l| l.current_lr);
            later_max[i] = later_max[i + 1].max(lr);
        }
        for (i, r) in run.into_iter().enumerate() {
            let h = match (schedules.get(&id), r.lr_state) {
                (Some(s), _) => s.decayed_fraction(r.step),
                // still warming up while a later checkpoint runs hotter
                (None, Some(lr)) if later_max[i + 1] > lr.current_lr => 0.0,
                (None, Some(lr)) => ((lr.peak_lr - lr.current_lr) / lr.peak_lr).max(0.0),
                (None, None) => return Err(Error::MissingSchedule(id.clone())),
            };
            let mut p = LossPoint::new(id.clone(), r.n_params, r.tokens_seen, r.loss);
            p.decayed = h;
            out.push((r.step, p));
        }
    }
    Ok(out)
}

/// Whether any run's learning rate falls below a rate seen earlier.
fn has_decay(records: &[&CheckpointRecord], schedules: &BTreeMap<String, LRSchedule>) -> Result<bool> {
    if schedules.values().any(|s| s.kind == ScheduleKind::Cosine) {
        return Ok(true);
    }
    for run in runs(records)?.values() {
        let mut highest = f64::NEG_INFINITY;
        for lr in run.iter().filter_map(|r| r.lr_state) {
            if lr.current_lr < highest {
                return Ok(true);
            }
            highest = highest.max(lr.current_lr);
        }
    }
    Ok(false)
}

/// Fits the curve law to every checkpoint at or past the warmup exclusion
/// (5000 steps when any run decays, else 3000, unless overridden).
pub fn fit_curve(
    records: &[&CheckpointRecord],
    schedules: &BTreeMap<String, LRSchedule>,
    warmup_exclusion: Option<u64>,
    cfg: &FitConfig,
) -> Result<CurveFit> {
    for s in schedules.values() {
        s.validate()?;
    }
    let cutoff = match warmup_exclusion {
        Some(c) => c,
        None if has_decay(records, schedules)? => COSINE_WARMUP_EXCLUSION,
        None => CONSTANT_WARMUP_EXCLUSION,
    };
    let points: Vec<LossPoint> = curve_points(records, schedules)?
        .into_iter()
        .filter(|(step, _)| *step >= cutoff)
        .map(|(_, p)| p)
        .collect();
    fit_curve_points(&points, cfg)
}

/// Fits `(A, B, α, β, E, F)` to points whose `decayed` field holds `H`.
pub fn fit_curve_points(points: &[LossPoint], cfg: &FitConfig) -> Result<CurveFit> {
    cfg.validate()?;
    if points.len() < 6 {
        return Err(Error::InsufficientData {
            what: "curve fit",
            needed: 6,
            got: points.len(),
        });
    }
    if let Some(p) = points.iter().find(|p| !(p.loss > 0.0) || !p.loss.is_finite()) {
        return Err(Error::NonPositiveLoss {
            model_id: p.model_id.clone(),
            value: p.loss,
        });
    }
    if points.iter().any(|p| !(0.0..=1.0).contains(&p.decayed)) {
        return Err(Error::invalid("decayed fraction must lie in [0, 1]"));
    }

    let ln_n: Vec<f64> = points.iter().map(|p| (p.n_params as f64).ln()).collect();
    let ln_d: Vec<f64> = points.iter().map(|p| (p.tokens as f64).ln()).collect();
    let shift = vec![
        ln_n.iter().sum::<f64>() / ln_n.len() as f64,
        ln_d.iter().sum::<f64>() / ln_d.len() as f64,
    ];
    let y: Vec<f64> = points.iter().map(|p| p.loss).collect();
    let h: Vec<f64> = points.iter().map(|p| p.decayed).collect();
    let obj = LogHuberObjective::new(vec![ln_n, ln_d], Some(h.clone()), &y, cfg.huber_delta)
        .with_shift(shift.clone());
    let bounds = obj.bounds();
    let solver = cfg.solver();
    let starts = crate::laws::power_starts(&y, cfg.multistart_count, true);
    let best = multistart(|s| minimize_bounded(&obj, s, &bounds, &solver), &starts)?;

    let x = &best.params;
    let params = CurveParams {
        base: PowerLawParams {
            size_coef: (x[0] + x[2] * shift[0]).exp(),
            size_exp: x[2],
            data_coef: (x[1] + x[3] * shift[1]).exp(),
            data_exp: x[3],
            irreducible: x[4],
        },
        decay_coef: x[5],
    };
    if !params.base.is_valid() || !params.decay_coef.is_finite() {
        return Err(Error::DegenerateFit(format!("non-finite curve parameters {params:?}")));
    }
    let mut warnings = Vec::new();
    if h.iter().all(|&v| v == 0.0) {
        warnings.push("H is zero at every point; F is unidentifiable".to_string());
    } else if params.decay_coef == 0.0 {
        warnings.push("F sits on its zero bound; the decay correction does not fit this data".to_string());
    }
    let optimizer = OptResult {
        params: vec![
            params.base.size_coef.ln(),
            params.base.data_coef.ln(),
            params.base.size_exp,
            params.base.data_exp,
            params.base.irreducible,
            params.decay_coef,
        ],
        ..best
    };
    LossFit::assemble(
        params,
        points,
        |p| eval_curve(&params, p.n_params as f64, p.tokens as f64, p.decayed),
        optimizer,
        warnings,
    )
}

/// `constant − cosine` at each shared step; positive where the cosine run
/// sits lower. Both curves must cover exactly the same steps.
pub fn residue(cosine: &[(u64, f64)], constant: &[(u64, f64)]) -> Result<Vec<(u64, f64)>> {
    let a: BTreeMap<u64, f64> = cosine.iter().copied().collect();
    let b: BTreeMap<u64, f64> = constant.iter().copied().collect();
    let ka: BTreeSet<u64> = a.keys().copied().collect();
    let kb: BTreeSet<u64> = b.keys().copied().collect();
    let missing: Vec<u64> = ka.symmetric_difference(&kb).copied().collect();
    if !missing.is_empty() {
        return Err(Error::MisalignedSteps { missing });
    }
    if ka.is_empty() {
        return Err(Error::invalid("residue needs at least one shared step"));
    }
    Ok(a.iter().map(|(s, v)| (*s, b[s] - v)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePrediction {
    pub step: u64,
    pub tokens: u64,
    pub decayed_fraction: f64,
    pub loss: f64,
    pub accuracy: f64,
}

/// Loss and accuracy along a run with `tokens_per_step` tokens per step.
pub fn curve_chain_params(
    cp: &CurveParams,
    s2: &SigmoidParams,
    n: u64,
    schedule: &LRSchedule,
    tokens_per_step: u64,
    steps: &[u64],
) -> Result<Vec<CurvePrediction>> {
    schedule.validate()?;
    steps
        .iter()
        .map(|&step| {
            let tokens = step
                .checked_mul(tokens_per_step)
                .ok_or_else(|| Error::invalid(format!("token count overflows at step {step}")))?;
            let h = schedule.decayed_fraction(step);
            let loss = eval_curve(cp, n as f64, tokens as f64, h);
            Ok(CurvePrediction {
                step,
                tokens,
                decayed_fraction: h,
                loss,
                accuracy: eval_sigmoid(s2, loss),
            })
        })
        .collect()
}

/// [`curve_chain_params`] with a fitted step 2; degenerate fits are refused.
pub fn curve_chain_predict(
    cp: &CurveParams,
    s2: &Step2Fit,
    n: u64,
    schedule: &LRSchedule,
    tokens_per_step: u64,
    steps: &[u64],
) -> Result<Vec<CurvePrediction>> {
    if s2.degenerate {
        return Err(Error::DegenerateFit(
            "step-2 sigmoid is underdetermined; cannot chain a curve through it".into(),
        ));
    }
    curve_chain_params(cp, &s2.params, n, schedule, tokens_per_step, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{chain_params, fit_step1};
    use proptest::prelude::*;

    const BASE: PowerLawParams = PowerLawParams {
        size_coef: 11.23,
        size_exp: 0.20,
        data_coef: 60.37,
        data_exp: 0.26,
        irreducible: 0.50,
    };
    const CP: CurveParams = CurveParams {
        base: BASE,
        decay_coef: 0.08,
    };
    const S2: SigmoidParams = SigmoidParams {
        amplitude: -0.73,
        offset: 0.99,
        steepness: 12.74,
        midpoint: 0.77,
    };

    #[test]
    fn eval_examples() {
        assert_eq!(eval_curve(&CP, 1e9, 1e11, 0.0), eval_power_law(&BASE, 1e9, 1e11));
        let flat = CurveParams {
            decay_coef: 0.0,
            ..CP
        };
        assert_eq!(eval_curve(&flat, 1e9, 1e11, 0.7), eval_curve(&flat, 1e9, 1e11, 0.1));
        let want = eval_power_law(&BASE, 1e9, 1e11) - 0.9 * 0.08;
        assert!((eval_curve(&CP, 1e9, 1e11, 0.9) - want).abs() < 1e-15);
    }

    fn synthetic_points(cp: &CurveParams, sched: impl Fn(u64) -> LRSchedule) -> Vec<LossPoint> {
        let mut out = Vec::new();
        for (n, batch, steps) in [(190_354_176u64, 524_288u64, 14_544u64), (371_262_464, 786_432, 18_904), (758_220_288, 1_310_720, 23_160)] {
            let s = sched(steps);
            for step in (200..=steps).step_by(400) {
                let d = step * batch;
                let h = s.decayed_fraction(step);
                let mut p = LossPoint::new(format!("{n}"), n, d, eval_curve(cp, n as f64, d as f64, h));
                p.decayed = h;
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn noiseless_curve_fit() {
        let pts = synthetic_points(&CP, |t| LRSchedule::cosine(1e-3, 500, t));
        let fit = fit_curve_points(&pts, &FitConfig::default()).unwrap();
        assert!(fit.avg_rel_fit_error < 0.05, "{}", fit.avg_rel_fit_error);
        assert!((fit.params.decay_coef - 0.08).abs() < 1e-3, "{:?}", fit.params);
    }

    #[test]
    fn zero_decay_matches_step1() {
        let pts = synthetic_points(&CP, |_| LRSchedule::constant(1e-3, 500));
        let cfg = FitConfig::default();
        let curve = fit_curve_points(&pts, &cfg).unwrap();
        let s1 = fit_step1(&pts, &cfg).unwrap();
        assert!(curve.warnings.iter().any(|w| w.contains("unidentifiable")));
        for (n, d) in [(1e9, 1e11), (7e9, 4e12)] {
            let a = eval_power_law(&curve.params.base, n, d);
            let b = eval_power_law(&s1.params, n, d);
            assert!(((a - b) / b).abs() < 1e-4, "{a} {b}");
            let t = eval_power_law(&BASE, n, d);
            assert!(((a - t) / t).abs() < 1e-3);
        }
    }

    #[test]
    fn missing_schedule() {
        let rec = CheckpointRecord {
            model_id: "m".into(),
            n_params: 1,
            tokens_seen: 1,
            step: 1,
            task: "t".into(),
            loss: 1.0,
            accuracy: None,
            feature_kind: Default::default(),
            lr_state: None,
        };
        assert!(matches!(
            curve_points(&[&rec], &BTreeMap::new()),
            Err(Error::MissingSchedule(_))
        ));
    }

    #[test]
    fn warmup_checkpoints_have_no_decay() {
        // rising through warmup, then a cosine tail that never hits the peak exactly
        let lrs = [2e-4, 6e-4, 9.5e-4, 7e-4, 3e-4];
        let recs: Vec<CheckpointRecord> = lrs
            .iter()
            .enumerate()
            .map(|(i, &lr)| CheckpointRecord {
                model_id: "m".into(),
                n_params: 10,
                tokens_seen: 100 * (i as u64 + 1),
                step: i as u64 + 1,
                task: "t".into(),
                loss: 1.0,
                accuracy: None,
                feature_kind: Default::default(),
                lr_state: Some(crate::types::LrState {
                    peak_lr: 1e-3,
                    current_lr: lr,
                }),
            })
            .collect();
        let refs: Vec<&CheckpointRecord> = recs.iter().collect();
        let h: Vec<f64> = curve_points(&refs, &BTreeMap::new())
            .unwrap()
            .iter()
            .map(|(_, p)| p.decayed)
            .collect();
        let want = [0.0, 0.0, 0.05, 0.3, 0.7];
        for (a, b) in h.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{h:?}");
        }
        assert!(has_decay(&refs, &BTreeMap::new()).unwrap());
        assert!(!has_decay(&refs[..3], &BTreeMap::new()).unwrap());
    }

    #[test]
    fn residue_examples() {
        let a = [(1, 1.0), (2, 0.9), (3, 0.8)];
        assert!(residue(&a, &a).unwrap().iter().all(|(_, v)| *v == 0.0));

        let s = LRSchedule::cosine(1e-3, 10, 100);
        let f = 0.05;
        let steps: Vec<u64> = (10..=100).step_by(5).collect();
        let constant: Vec<(u64, f64)> = steps.iter().map(|&t| (t, 1.0 + 1.0 / t as f64)).collect();
        let cosine: Vec<(u64, f64)> = constant.iter().map(|&(t, l)| (t, l - f * s.decayed_fraction(t))).collect();
        for (t, r) in residue(&cosine, &constant).unwrap() {
            assert!((r / f - s.decayed_fraction(t)).abs() < 1e-12);
        }

        match residue(&[(1, 1.0), (2, 1.0)], &[(2, 1.0), (3, 1.0)]) {
            Err(Error::MisalignedSteps { missing }) => assert_eq!(missing, vec![1, 3]),
            other => panic!("{other:?}"),
        }
        assert!(residue(&[], &[]).is_err());
    }

    #[test]
    fn constant_schedule_chains_pointwise() {
        let s = LRSchedule::constant(1e-3, 100);
        let steps = [200, 1000, 5000];
        let preds = curve_chain_params(&CP, &S2, 1_000_000_000, &s, 1_048_576, &steps).unwrap();
        for p in &preds {
            let (l, a) = chain_params(&BASE, &S2, 1e9, (p.step * 1_048_576) as f64);
            assert_eq!((p.loss, p.accuracy), (l, a));
        }
        let one = curve_chain_params(&CP, &S2, 1_000_000_000, &LRSchedule::cosine(1e-3, 100, 10_000), 1024, &[4000]).unwrap();
        assert_eq!(one.len(), 1);
        let h = LRSchedule::cosine(1e-3, 100, 10_000).decayed_fraction(4000);
        let l = eval_curve(&CP, 1e9, (4000 * 1024) as f64, h);
        assert_eq!(one[0].accuracy, eval_sigmoid(&S2, l));
    }

    proptest! {
        #[test]
        fn affine_in_h(h in 0.0f64..0.9, n in 1e8f64..1e10, d in 1e9f64..1e12) {
            let eps = 1e-4;
            let slope = (eval_curve(&CP, n, d, h + eps) - eval_curve(&CP, n, d, h)) / eps;
            prop_assert!((slope + CP.decay_coef).abs() < 1e-8);
        }
    }
}
