//! Compute-only variant: `L(C) = A / C^α + E` with `C = 6ND`.

use serde::{Deserialize, Serialize};

use super::data::LossPoint;
use super::objective::{subsample, LogHuberObjective};
use super::power::{check_losses, LossFit, IRREDUCIBLE_FRACTIONS};
use crate::error::{Error, Result};
use crate::optim::{minimize_bounded, multistart, OptResult};
use crate::types::{compute_flops, FitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopsParams {
    /// A
    pub coef: f64,
    /// α
    pub exp: f64,
    /// E
    pub irreducible: f64,
}

impl FlopsParams {
    pub fn formula(&self) -> String {
        format!("L(C) = {:.2} / C^{:.2} + {:.2}", self.coef, self.exp, self.irreducible)
    }
}

pub type FlopsFit = LossFit<FlopsParams>;

pub fn eval_flops_law(p: &FlopsParams, flops: f64) -> f64 {
    p.coef / flops.powf(p.exp) + p.irreducible
}

const FLOPS_EXPONENTS: [f64; 5] = [0.05, 0.1, 0.3, 0.5, 0.8];

pub fn fit_flops_law(points: &[LossPoint], cfg: &FitConfig) -> Result<FlopsFit> {
    cfg.validate()?;
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            what: "compute-law fit",
            needed: 3,
            got: points.len(),
        });
    }
    check_losses(points)?;

    let log_c: Vec<f64> = points
        .iter()
        .map(|p| compute_flops(p.n_params, p.tokens).ln())
        .collect();
    let shift = log_c.iter().sum::<f64>() / log_c.len() as f64;
    let y: Vec<f64> = points.iter().map(|p| p.loss).collect();
    let obj = LogHuberObjective::new(vec![log_c], None, &y, cfg.huber_delta).with_shift(vec![shift]);
    let bounds = obj.bounds();
    let solver = cfg.solver();

    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let c = (0.5 * (hi - lo)).max(1e-3 * lo).ln();
    let grid: Vec<Vec<f64>> = FLOPS_EXPONENTS
        .iter()
        .flat_map(|&a| IRREDUCIBLE_FRACTIONS.iter().map(move |&f| vec![c, a, f * lo]))
        .collect();
    let starts = subsample(&grid, cfg.multistart_count);
    let best = multistart(|s| minimize_bounded(&obj, s, &bounds, &solver), &starts)?;

    let x = &best.params;
    let params = FlopsParams {
        coef: (x[0] + x[1] * shift).exp(),
        exp: x[1],
        irreducible: x[2],
    };
    if !(params.coef.is_finite() && params.exp.is_finite() && params.irreducible.is_finite()) {
        return Err(Error::DegenerateFit(format!("non-finite compute-law parameters {params:?}")));
    }
    let optimizer = OptResult {
        params: vec![params.coef.ln(), params.exp, params.irreducible],
        ..best
    };
    LossFit::assemble(
        params,
        points,
        |p| eval_flops_law(&params, compute_flops(p.n_params, p.tokens)),
        optimizer,
        Vec::new(),
    )
}
