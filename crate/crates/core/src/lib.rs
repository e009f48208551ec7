pub mod analysis;
pub mod cli;
pub mod curves;
pub mod error;
pub mod io;
pub mod laws;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod plot;
pub mod presets;
pub mod report;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
