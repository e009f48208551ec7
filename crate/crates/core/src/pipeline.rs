//! Per-task fitting and prediction for each modeling variant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::data::{final_loss_points, select};
use crate::laws::{
    chain_predict, eval_flops_law, eval_log_sigmoid, eval_power_law, eval_sigmoid, eval_single_step, fit_flops_law,
    fit_log_sigmoid, fit_single_step_records, fit_step1_records, fit_step2, log_sigmoid_points, FlopsFit,
    LogSigmoidFit, SingleStepFit, Step1Fit, Step2Fit,
};
use crate::types::{CheckpointRecord, FeatureKind, FitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Power law on bits-per-byte, then a sigmoid.
    #[default]
    TwoStepBpb,
    /// Power law in training compute only, then a sigmoid.
    Flops,
    /// Power law on task cross-entropy, then a log-sigmoid.
    TaskCe,
    /// Power law on held-out language-modeling loss, then a sigmoid.
    LmLoss,
    /// Accuracy directly from `(N, D)`.
    SingleStep,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::TwoStepBpb,
        Variant::Flops,
        Variant::TaskCe,
        Variant::LmLoss,
        Variant::SingleStep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::TwoStepBpb => "two_step_bpb",
            Variant::Flops => "flops",
            Variant::TaskCe => "task_ce",
            Variant::LmLoss => "lm_loss",
            Variant::SingleStep => "single_step",
        }
    }

    /// The record feature the variant reads.
    pub fn feature(self) -> FeatureKind {
        match self {
            Variant::TaskCe => FeatureKind::TaskCe,
            Variant::LmLoss => FeatureKind::LmLoss,
            _ => FeatureKind::BpbCorrect,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    TwoStep { step1: Step1Fit, step2: Step2Fit },
    Flops { step1: FlopsFit, step2: Step2Fit },
    TaskCe { step1: Step1Fit, step2: LogSigmoidFit },
    SingleStep { fit: SingleStepFit },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFit {
    pub task: String,
    pub variant: Variant,
    pub formulas: Vec<String>,
    pub degenerate: bool,
    pub model: FittedModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Absent for the single-step variant.
    pub loss: Option<f64>,
    pub accuracy: f64,
}

pub fn fit_task(records: &[CheckpointRecord], task: &str, variant: Variant, cfg: &FitConfig) -> Result<TaskFit> {
    let sel = select(records, task, variant.feature())?;
    let model = match variant {
        Variant::TwoStepBpb | Variant::LmLoss => FittedModel::TwoStep {
            step1: fit_step1_records(&sel, cfg)?,
            step2: fit_step2(&sel, cfg)?,
        },
        Variant::Flops => FittedModel::Flops {
            step1: fit_flops_law(&final_loss_points(&sel, cfg.last_k_average)?, cfg)?,
            step2: fit_step2(&sel, cfg)?,
        },
        Variant::TaskCe => FittedModel::TaskCe {
            step1: fit_step1_records(&sel, cfg)?,
            step2: fit_log_sigmoid(&log_sigmoid_points(&sel)?, cfg)?,
        },
        Variant::SingleStep => FittedModel::SingleStep {
            fit: fit_single_step_records(&sel, cfg)?,
        },
    };
    let (formulas, degenerate) = match &model {
        FittedModel::TwoStep { step1, step2 } => {
            (vec![step1.params.formula(), step2.params.formula()], step2.degenerate)
        }
        FittedModel::Flops { step1, step2 } => {
            (vec![step1.params.formula(), step2.params.formula()], step2.degenerate)
        }
        FittedModel::TaskCe { step1, step2 } => {
            (vec![step1.params.formula(), step2.params.formula()], step2.degenerate)
        }
        FittedModel::SingleStep { fit } => (vec![fit.params.formula()], fit.degenerate),
    };
    Ok(TaskFit {
        task: task.to_string(),
        variant,
        formulas,
        degenerate,
        model,
    })
}

impl TaskFit {
    /// Warnings carried by the underlying fits.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = match &self.model {
            FittedModel::TwoStep { step1, .. } | FittedModel::TaskCe { step1, .. } => step1.warnings.clone(),
            FittedModel::Flops { step1, .. } => step1.warnings.clone(),
            FittedModel::SingleStep { .. } => Vec::new(),
        };
        if self.degenerate {
            out.push(match self.model {
                FittedModel::SingleStep { .. } => "single-step fit is degenerate: accuracy barely depends on N".into(),
                _ => "step-2 fit is degenerate (underdetermined)".into(),
            });
        }
        out
    }

    /// Extrapolates to `(N, D)`. Degenerate two-step fits are refused;
    /// a degenerate single-step fit still predicts.
    pub fn predict(&self, n: f64, d: f64) -> Result<Prediction> {
        let refuse = || {
            Error::DegenerateFit(format!(
                "{}: second-stage fit is underdetermined; try the flops or single_step variant",
                self.task
            ))
        };
        match &self.model {
            FittedModel::TwoStep { step1, step2 } => {
                let (loss, accuracy) = chain_predict(step1, step2, n, d)?;
                Ok(Prediction {
                    loss: Some(loss),
                    accuracy,
                })
            }
            FittedModel::Flops { step1, step2 } => {
                if step2.degenerate {
                    return Err(refuse());
                }
                let loss = eval_flops_law(&step1.params, 6.0 * n * d);
                Ok(Prediction {
                    loss: Some(loss),
                    accuracy: eval_sigmoid(&step2.params, loss),
                })
            }
            FittedModel::TaskCe { step1, step2 } => {
                if step2.degenerate {
                    return Err(refuse());
                }
                let loss = eval_power_law(&step1.params, n, d);
                Ok(Prediction {
                    loss: Some(loss),
                    accuracy: eval_log_sigmoid(&step2.params, loss),
                })
            }
            FittedModel::SingleStep { fit } => Ok(Prediction {
                loss: None,
                accuracy: eval_single_step(&fit.params, n, d),
            }),
        }
    }
}
