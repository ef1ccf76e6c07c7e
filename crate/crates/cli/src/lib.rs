//! Experiment driver: declarative configs in, CSV curves and JSON fidelity
//! reports out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod output;

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;
pub use experiments::ExperimentOutput;

/// Validates `cfg` for `experiment` and runs it.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    cfg.validate(experiment)?;
    match experiment {
        Experiment::Memory => experiments::memory(cfg),
        Experiment::Crusher => experiments::crusher(cfg),
        Experiment::Natural => experiments::natural(cfg),
        Experiment::Gates => experiments::gates(cfg),
        Experiment::NoisyGate => experiments::noisy_gate(cfg),
    }
}
