//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model definition violates its stability or covariance invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A configuration value is outside its documented domain.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The innovation covariance lost positive definiteness mid-stream.
    #[error("degenerate observation covariance at step {step}")]
    DegenerateObservationCov { step: u64 },

    /// Every particle weight underflowed at once.
    #[error("particle filter collapsed at step {step}")]
    ParticleCollapse { step: u64 },

    /// The stationary-covariance fixed point did not converge.
    #[error("Lyapunov iteration did not converge within {iters} iterations")]
    LyapunovDiverged { iters: u64 },

    /// Quasi-stationary estimation lost its whole population in one step,
    /// which means the threshold is too low to support a sub-threshold law.
    #[error("quasi-stationary population extinct at iteration {iter}")]
    QuasiStationaryCollapse { iter: u64 },

    /// A procedure that requires positive information per observation was
    /// handed a parameter pair with non-positive estimated information.
    #[error("estimated information {estimate:.6} (se {se:.6}) is not positive")]
    NonPositiveInformation { estimate: f64, se: f64 },

    /// A random walk failed to reach its target level within the step cap.
    #[error("walk did not cross within {cap} steps")]
    WalkTimeout { cap: u64 },
}
