//! Two-colour urn with random multiple drawing and random, time-dependent
//! reinforcement: simulation, estimators and exact enumeration.

pub mod error;
pub mod estimators;
pub mod oracle;
pub mod pmf;
pub mod randkit;
pub mod scenarios;
pub mod urn;

pub use error::{Error, Result};
pub use scenarios::{builtin_catalog, catalog, Case, Scenario};
pub use urn::{run, run_thinned, Simulation, StepRecord, Trajectory, UrnState};
