use rayon::prelude::*;

use super::{OptResult, OptimError};

/// Runs `minimizer` from every start and keeps the lowest objective
/// (first wins on ties). Starts run concurrently; the result is identical
/// to a sequential sweep because selection happens in start order.
pub fn multistart<M>(minimizer: M, starts: &[Vec<f64>]) -> Result<OptResult, OptimError>
where
    M: Fn(&[f64]) -> Result<OptResult, OptimError> + Sync,
{
    if starts.is_empty() {
        return Err(OptimError::NoStarts);
    }
    let results: Vec<Result<OptResult, OptimError>> = starts.par_iter().map(|s| minimizer(s)).collect();
    let mut best: Option<OptResult> = None;
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) if r.objective.is_finite() => {
                if best.as_ref().map_or(true, |b| r.objective < b.objective) {
                    best = Some(r);
                }
            }
            Ok(r) => failures.push(format!("start {i}: non-finite objective {}", r.objective)),
            Err(e) => failures.push(format!("start {i}: {e}")),
        }
    }
    best.ok_or(OptimError::AllStartsFailed(failures))
}
