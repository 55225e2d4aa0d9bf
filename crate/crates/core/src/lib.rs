//! Offline-optimal transmit power and wireless energy transfer schedules for
//! energy harvesting networks: a two-hop relay, a Gaussian two-way channel and
//! a Gaussian multiple access channel, where one node can beam part of its
//! harvested energy to another with efficiency `alpha`.
//!
//! Every solution can be checked against its KKT conditions
//! ([`solver::kkt_residuals`]), model-specific structural properties, and a
//! brute-force grid search ([`oracle`]).

pub mod cli;
pub mod domain;
pub mod error;
pub mod mac;
pub mod oracle;
pub mod relay;
pub mod solver;
pub mod twoway;
pub mod waterfill;

pub use domain::{
    data_causality_violations, feasibility_violations, majorizes, power_of_rate, rate_of_power,
    EnergyProfile, ModelKind, PhysicalUnits, Policy, PowerSchedule, Scenario, TransferSchedule, Units,
    Violation, ViolationKind,
};
pub use error::{Error, Result};
