use super::power::{eval_power_law, Step1Fit};
use super::sigmoid::{eval_sigmoid, Step2Fit};
use crate::error::{Error, Result};
use crate::types::{PowerLawParams, SigmoidParams};

/// `(loss, accuracy)` for `(n, d)` through both laws.
pub fn chain_params(s1: &PowerLawParams, s2: &SigmoidParams, n: f64, d: f64) -> (f64, f64) {
    let loss = eval_power_law(s1, n, d);
    (loss, eval_sigmoid(s2, loss))
}

/// Chains fitted laws; a degenerate step-2 fit is refused.
pub fn chain_predict(s1: &Step1Fit, s2: &Step2Fit, n: f64, d: f64) -> Result<(f64, f64)> {
    if s2.degenerate {
        return Err(Error::DegenerateFit(
            "step-2 sigmoid is underdetermined; use the flops or single_step variant instead".into(),
        ));
    }
    Ok(chain_params(&s1.params, &s2.params, n, d))
}
