//! Joint active and passive beamforming for an IRS-aided radar-communication
//! base station.

pub mod config;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod penalty;
pub mod sdr;
pub mod rng;
pub mod scene;

pub use config::{Scenario, SystemConfig};
pub use error::{ConfigError, SolverError};
