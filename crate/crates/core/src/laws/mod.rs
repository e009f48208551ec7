//! Scaling laws: the two-step `(N, D) → loss → accuracy` pipeline and its
//! variants (compute-only, single-step, cross-entropy log-sigmoid).

mod chain;
pub mod data;
mod flops;
mod log_sigmoid;
mod objective;
mod power;
mod sigmoid;
mod single_step;

pub use chain::{chain_params, chain_predict};
pub use data::LossPoint;
pub use flops::{eval_flops_law, fit_flops_law, FlopsFit, FlopsParams};
pub use log_sigmoid::{
    eval_log_sigmoid, fit_log_sigmoid, log_sigmoid_points, LogSigmoidFit, LogSigmoidParams,
    LOG_SIGMOID_HEAD_FRACTION,
};
pub use objective::LogHuberObjective;
pub use power::{eval_power_law, fit_step1, fit_step1_records, step1_objective, FitPoint, LossFit, Step1Fit};
pub use sigmoid::{eval_sigmoid, fit_sigmoid, fit_step2, step2_points, Step2Fit};
pub use single_step::{
    eval_single_step, fit_single_step, fit_single_step_records, AccuracyPoint, SingleStepFit,
    SingleStepParams,
};

pub(crate) use power::power_starts;
