use thiserror::Error;

use crate::optim::OptimError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what}: need at least {needed} points, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("loss must be positive to take its logarithm (model {model_id}, value {value})")]
    NonPositiveLoss { model_id: String, value: f64 },

    #[error("no records for task {0:?}")]
    NoRecordsForTask(String),

    #[error("token count overflows u64 (n_params {n_params}, multiplier {multiplier})")]
    TokenOverflow { n_params: u64, multiplier: f64 },

    #[error("curves are not aligned; steps missing from one side: {missing:?}")]
    MisalignedSteps { missing: Vec<u64> },

    #[error("model {0:?} has no lr_state and no schedule was supplied")]
    MissingSchedule(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Optim(#[from] OptimError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
