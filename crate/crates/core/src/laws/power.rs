//! Step 1: `(N, D) → loss` via `L = A/N^α + B/D^β + E`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::data::{final_loss_points, LossPoint};
use super::objective::{subsample, LogHuberObjective};
use crate::error::{Error, Result};
use crate::metrics::relative_error;
use crate::optim::{minimize_bounded, multistart, OptResult};
use crate::types::{CheckpointRecord, FitConfig, PowerLawParams};

pub(crate) const EXPONENT_GRID: [f64; 4] = [0.1, 0.3, 0.5, 0.8];
pub(crate) const IRREDUCIBLE_FRACTIONS: [f64; 2] = [0.5, 0.9];

pub fn eval_power_law(p: &PowerLawParams, n: f64, d: f64) -> f64 {
    p.size_coef / n.powf(p.size_exp) + p.data_coef / d.powf(p.data_exp) + p.irreducible
}

impl PowerLawParams {
    /// Two-decimal rendering, e.g. `L(N, D) = 38.07 / N^0.23 + 100.09 / D^0.24 + 0.45`.
    pub fn formula(&self) -> String {
        format!(
            "L(N, D) = {:.2} / N^{:.2} + {:.2} / D^{:.2} + {:.2}",
            self.size_coef, self.size_exp, self.data_coef, self.data_exp, self.irreducible
        )
    }
}

/// Per-point diagnostics of a loss-law fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub model_id: String,
    pub n_params: u64,
    pub tokens: u64,
    pub decayed: f64,
    pub actual: f64,
    pub predicted: f64,
    /// Percent.
    pub rel_error: f64,
}

/// A fitted loss law together with its fitting diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFit<P> {
    pub params: P,
    pub points: Vec<FitPoint>,
    /// Mean of the per-point relative errors, in percent.
    pub avg_rel_fit_error: f64,
    pub optimizer: OptResult,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl<P> LossFit<P> {
    pub fn per_point_rel_error(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rel_error).collect()
    }

    pub(crate) fn assemble(
        params: P,
        data: &[LossPoint],
        predict: impl Fn(&LossPoint) -> f64,
        optimizer: OptResult,
        mut warnings: Vec<String>,
    ) -> Result<Self> {
        let points = data
            .iter()
            .map(|p| {
                let predicted = predict(p);
                Ok(FitPoint {
                    model_id: p.model_id.clone(),
                    n_params: p.n_params,
                    tokens: p.tokens,
                    decayed: p.decayed,
                    actual: p.loss,
                    predicted,
                    rel_error: relative_error(predicted, p.loss)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let avg = points.iter().map(|p| p.rel_error).sum::<f64>() / points.len() as f64;
        if !optimizer.converged {
            warnings.push(format!(
                "optimizer stopped after {} iterations without meeting tolerances",
                optimizer.iterations
            ));
        }
        Ok(Self {
            params,
            points,
            avg_rel_fit_error: avg,
            optimizer,
            warnings,
        })
    }
}

pub type Step1Fit = LossFit<PowerLawParams>;

/// The step-1 objective over `(a, b, α, β, E)` with `a = ln A`, `b = ln B`.
pub fn step1_objective(points: &[LossPoint], delta: f64) -> LogHuberObjective {
    let (log_x, y) = log_columns(points);
    LogHuberObjective::new(log_x, None, &y, delta)
}

pub(crate) fn log_columns(points: &[LossPoint]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let ln_n = points.iter().map(|p| (p.n_params as f64).ln()).collect();
    let ln_d = points.iter().map(|p| (p.tokens as f64).ln()).collect();
    (vec![ln_n, ln_d], points.iter().map(|p| p.loss).collect())
}

pub(crate) fn check_losses(points: &[LossPoint]) -> Result<()> {
    match points.iter().find(|p| !(p.loss > 0.0) || !p.loss.is_finite()) {
        Some(p) => Err(Error::NonPositiveLoss {
            model_id: p.model_id.clone(),
            value: p.loss,
        }),
        None => Ok(()),
    }
}

pub(crate) fn distinct_nd(points: &[LossPoint]) -> usize {
    points
        .iter()
        .map(|p| (p.n_params, p.tokens))
        .collect::<BTreeSet<_>>()
        .len()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Grid of starts in the centered parameterization
/// `[c_a, c_b, α, β, E, (F)]`, capped at `count`.
pub(crate) fn power_starts(y: &[f64], count: usize, with_decay: bool) -> Vec<Vec<f64>> {
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let half_range = (0.5 * (hi - lo)).max(1e-3 * lo);
    let c = half_range.ln();
    let mut grid = Vec::new();
    for &alpha in &EXPONENT_GRID {
        for &beta in &EXPONENT_GRID {
            for &frac in &IRREDUCIBLE_FRACTIONS {
                let mut x = vec![c, c, alpha, beta, frac * lo];
                if with_decay {
                    x.push(0.0);
                }
                grid.push(x);
            }
        }
    }
    subsample(&grid, count)
}

/// Fits the two-term law to the given points.
pub fn fit_step1(points: &[LossPoint], cfg: &FitConfig) -> Result<Step1Fit> {
    cfg.validate()?;
    let distinct = distinct_nd(points);
    if distinct < 5 {
        return Err(Error::InsufficientData {
            what: "step-1 fit (distinct (N, D) pairs)",
            needed: 5,
            got: distinct,
        });
    }
    check_losses(points)?;

    let (log_x, y) = log_columns(points);
    let shift = vec![mean(&log_x[0]), mean(&log_x[1])];
    let obj = LogHuberObjective::new(log_x, None, &y, cfg.huber_delta).with_shift(shift.clone());
    let bounds = obj.bounds();
    let solver = cfg.solver();
    let starts = power_starts(&y, cfg.multistart_count, false);
    let best = multistart(|s| minimize_bounded(&obj, s, &bounds, &solver), &starts)?;

    let x = &best.params;
    let params = PowerLawParams {
        size_coef: (x[0] + x[2] * shift[0]).exp(),
        size_exp: x[2],
        data_coef: (x[1] + x[3] * shift[1]).exp(),
        data_exp: x[3],
        irreducible: x[4],
    };
    let mut warnings = Vec::new();
    if params.size_exp == 0.0 || params.data_exp == 0.0 {
        warnings.push("an exponent sits on its zero bound; that term is a constant".to_string());
    }
    if !params.is_valid() {
        return Err(Error::DegenerateFit(format!("non-finite step-1 parameters {params:?}")));
    }
    let optimizer = OptResult {
        params: vec![
            params.size_coef.ln(),
            params.data_coef.ln(),
            params.size_exp,
            params.data_exp,
            params.irreducible,
        ],
        ..best
    };
    LossFit::assemble(
        params,
        points,
        |p| eval_power_law(&params, p.n_params as f64, p.tokens as f64),
        optimizer,
        warnings,
    )
}

/// [`fit_step1`] on the final (last-k averaged) loss of each run.
pub fn fit_step1_records(records: &[&CheckpointRecord], cfg: &FitConfig) -> Result<Step1Fit> {
    fit_step1(&final_loss_points(records, cfg.last_k_average)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{min_eigenvalue, numerical_hessian, Objective};
    use proptest::prelude::*;

    const TRUTH: PowerLawParams = PowerLawParams {
        size_coef: 38.07,
        size_exp: 0.23,
        data_coef: 100.09,
        data_exp: 0.24,
        irreducible: 0.45,
    };

    fn grid(p: &PowerLawParams) -> Vec<LossPoint> {
        let sizes = [190_354_176u64, 371_262_464, 758_220_288, 1_279_395_840];
        let mut out = Vec::new();
        for (i, &n) in sizes.iter().enumerate() {
            for m in [1u64, 2, 5, 10] {
                let d = 20 * m * n;
                out.push(LossPoint::new(
                    format!("{i}-{m}"),
                    n,
                    d,
                    eval_power_law(p, n as f64, d as f64),
                ));
            }
        }
        out
    }

    #[test]
    fn eval_examples() {
        let l = eval_power_law(&TRUTH, 6_887_575_552.0, 3.95e12);
        let oracle = 38.07 * (6_887_575_552f64).powf(-0.23) + 100.09 * (3.95e12f64).powf(-0.24) + 0.45;
        assert!((l - oracle).abs() < 1e-12);
        assert!((l - 0.752_77).abs() < 1e-4, "{l}");
        let flat = PowerLawParams {
            size_coef: 0.0,
            data_coef: 0.0,
            irreducible: 0.7,
            ..TRUTH
        };
        assert_eq!(eval_power_law(&flat, 1e9, 1e12), 0.7);
        let zero_exp = PowerLawParams {
            size_exp: 0.0,
            data_exp: 0.0,
            ..TRUTH
        };
        assert!((eval_power_law(&zero_exp, 5e8, 1e10) - (38.07 + 100.09 + 0.45)).abs() < 1e-12);
    }

    #[test]
    fn formula_string() {
        assert_eq!(TRUTH.formula(), "L(N, D) = 38.07 / N^0.23 + 100.09 / D^0.24 + 0.45");
    }

    #[test]
    fn noiseless_recovery() {
        let pts = grid(&TRUTH);
        let fit = fit_step1(&pts, &FitConfig::default()).unwrap();
        assert!(fit.avg_rel_fit_error < 0.05, "{}", fit.avg_rel_fit_error);
        let p = fit.params;
        for (a, b) in [
            (p.size_coef, TRUTH.size_coef),
            (p.size_exp, TRUTH.size_exp),
            (p.data_coef, TRUTH.data_coef),
            (p.data_exp, TRUTH.data_exp),
            (p.irreducible, TRUTH.irreducible),
        ] {
            assert!(((a - b) / b).abs() < 1e-3, "{p:?}");
        }
    }

    #[test]
    fn too_few_points() {
        let pts: Vec<_> = grid(&TRUTH).into_iter().take(4).collect();
        assert!(matches!(
            fit_step1(&pts, &FitConfig::default()),
            Err(Error::InsufficientData { needed: 5, got: 4, .. })
        ));
    }

    #[test]
    fn non_positive_loss() {
        let mut pts = grid(&TRUTH);
        pts[3].loss = 0.0;
        assert!(matches!(
            fit_step1(&pts, &FitConfig::default()),
            Err(Error::NonPositiveLoss { .. })
        ));
    }

    #[test]
    fn order_and_duplication_invariance() {
        let mut pts = grid(&TRUTH);
        for (i, p) in pts.iter_mut().enumerate() {
            p.loss *= 1.0 + 0.004 * ((i * 37 % 11) as f64 / 11.0 - 0.5);
        }
        let cfg = FitConfig::default();
        let base = fit_step1(&pts, &cfg).unwrap();
        let mut shuffled = pts.clone();
        shuffled.reverse();
        let doubled: Vec<_> = pts.iter().chain(pts.iter()).cloned().collect();
        for other in [fit_step1(&shuffled, &cfg).unwrap(), fit_step1(&doubled, &cfg).unwrap()] {
            for (n, d) in [(1e9, 2e10), (7e9, 4e12)] {
                let a = eval_power_law(&base.params, n, d);
                let b = eval_power_law(&other.params, n, d);
                assert!(((a - b) / a).abs() < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn fitted_objective_beats_every_start() {
        let mut pts = grid(&TRUTH);
        pts[5].loss *= 1.01;
        let cfg = FitConfig::default();
        let fit = fit_step1(&pts, &cfg).unwrap();
        let obj = step1_objective(&pts, cfg.huber_delta);
        let (log_x, y) = log_columns(&pts);
        let shift = [mean(&log_x[0]), mean(&log_x[1])];
        let at_fit = obj.value(&fit.optimizer.params);
        for s in power_starts(&y, cfg.multistart_count, false) {
            let raw = [s[0] + s[2] * shift[0], s[1] + s[3] * shift[1], s[2], s[3], s[4]];
            assert!(at_fit <= obj.value(&raw) + 1e-15);
        }
    }

    #[test]
    fn gradient_check_at_random_points() {
        let obj = step1_objective(&grid(&TRUTH), 1e-3);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..20 {
            let x = [
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.1..0.8),
                rng.gen_range(0.1..0.8),
                rng.gen_range(0.0..1.0),
            ];
            let mut g = [0.0; 5];
            obj.value_and_gradient(&x, &mut g);
            let fd = crate::optim::numerical_gradient(|p| obj.value(p), &x, 1e-6);
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * scale, "{g:?} {fd:?}");
            }
        }
    }

    #[test]
    fn hessian_is_symmetric_at_optimum() {
        let pts = grid(&TRUTH);
        let obj = step1_objective(&pts, 1e-3);
        let x = [TRUTH.size_coef.ln(), TRUTH.data_coef.ln(), 0.23, 0.24, 0.45];
        // steps stay well inside the Huber threshold so the quadratic branch is probed
        let h = numerical_hessian(|p| obj.value(p), &x, 1e-6);
        assert_eq!(h, h.transpose());
        // a noiseless optimum is a minimum, so curvature there is non-negative
        assert!(min_eigenvalue(&h) > -1e-6, "{}", h.clone().symmetric_eigen().eigenvalues);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn decreasing_in_n_and_d(
            a in 0.1f64..100.0, alpha in 0.01f64..1.0,
            b in 0.1f64..100.0, beta in 0.01f64..1.0,
            e in 0.0f64..2.0, n in 1e6f64..1e10, d in 1e8f64..1e13, f in 1.01f64..10.0,
        ) {
            let p = PowerLawParams { size_coef: a, size_exp: alpha, data_coef: b, data_exp: beta, irreducible: e };
            prop_assert!(eval_power_law(&p, n * f, d) < eval_power_law(&p, n, d));
            prop_assert!(eval_power_law(&p, n, d * f) < eval_power_law(&p, n, d));
        }
    }
}
