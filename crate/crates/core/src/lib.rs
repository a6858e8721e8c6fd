//! Sequential change point detection for state space models.
//!
//! The library maintains, per candidate post-change parameter, a running log
//! likelihood ratio driven by exact (Kalman) or approximate (particle)
//! one-step predictive densities, combines candidates over a discretized
//! prior, and runs Shiryayev-Roberts type stopping rules on the mixture
//! statistic. A replication harness estimates operating characteristics
//! (average run length to false alarm, conditional detection delays,
//! equalizer deviations) and the constants of the second-order delay
//! approximation, all with reproducible seeded streams and standard errors.

pub mod acceptance;
pub mod asymptotics;
pub mod detect;
pub mod error;
pub mod harness;
pub mod kalman;
pub mod linalg;
pub mod lr;
pub mod numerics;
pub mod oracle;
pub mod particle;
pub mod prior;
pub mod psi;
pub mod rng;
pub mod ssm;

pub use detect::{run_detector, Detector, DetectorConfig, DetectorRule, InitMode, StoppingReport};
pub use error::{Error, Result};
pub use harness::McEstimate;
pub use lr::{Engine, LrProcess};
pub use prior::PriorGrid;
pub use ssm::{simulate_trajectory, ChangeScenario, ChangeTime, ModelSpec, Trajectory};
