//! Two-spin decoherence-free subspace simulation: operators, Hamiltonians,
//! noise channels, pulse sequences, spatial ensembles and fidelity metrics.

pub mod channels;
pub mod ensemble;
pub mod error;
pub mod hamiltonians;
pub mod metrics;
pub mod optimize;
pub mod pulses;
pub mod spinops;

pub use error::{Error, Result};
