//! Running log likelihood ratios and Shiryayev-Roberts sums over the prior
//! grid.
//!
//! Per grid node θ_i the process keeps log LR_n(θ_i) and log R_n(θ_i), both
//! driven by the increment g_n(θ_i) = ℓ_n(θ_i) − ℓ_n(θ0): the difference of
//! one-step predictive log densities from the node's filter and the shared
//! θ0 filter. Windowed ratios follow as differences of running values, which
//! is what gives the O(1)-per-step recursion
//!
//! ```text
//! log R_{n+1} = g_{n+1} − log q + log(1 + R_n)
//! ```
//!
//! evaluated through softplus so the ratio itself is never exponentiated.

use nalgebra::DVector;
use rand_chacha::ChaCha12Rng;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kalman::KalmanFilter;
use crate::numerics::{log_norm_cdf_diff, log_sr_next, logsumexp, LN_2PI};
use crate::particle::ParticleFilter;
use crate::prior::PriorGrid;
use crate::ssm::{GaussianSsm, ModelSpec};

/// Which likelihood backend drives the increments.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum Engine {
    /// Exact Kalman predictive densities.
    Exact,
    /// Bootstrap particle approximation with the given cloud size.
    Particle { particles: usize },
}

/// Materialized models for the null parameter and every grid node, built
/// once and shared across replications.
#[derive(Debug, Clone)]
pub struct ModelBank {
    pub null: Arc<GaussianSsm>,
    pub nodes: Vec<Arc<GaussianSsm>>,
    pub grid: PriorGrid,
    pub theta0: f64,
}

impl ModelBank {
    pub fn build(model: &ModelSpec, theta0: f64, grid: &PriorGrid) -> Result<Self> {
        let null = Arc::new(model.at(theta0)?);
        let nodes = grid
            .nodes()
            .iter()
            .map(|&t| model.at(t).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelBank {
            null,
            nodes,
            grid: grid.clone(),
            theta0,
        })
    }
}

#[derive(Clone)]
enum NodeFilter {
    Kalman(KalmanFilter),
    Particle(ParticleFilter),
}

impl NodeFilter {
    fn step(
        &mut self,
        y: &DVector<f64>,
        u: Option<&DVector<f64>>,
        rng: &mut ChaCha12Rng,
    ) -> Result<f64> {
        match self {
            NodeFilter::Kalman(f) => f.step_logpred(y, u),
            NodeFilter::Particle(f) => f.step_logpred(y, u, rng),
        }
    }
}

/// Initial value of the per-node SR statistic.
#[derive(Debug, Clone)]
pub enum SrInit {
    /// R_0 = 0: the plain sum over change hypotheses 1..n.
    Zero,
    /// R_0 = 1: adds the stationary-initialized full-history ratio as the
    /// k = 0 term of the statistic.
    WithPriorTerm,
    /// Per-node log R_0 values, e.g. a quasi-stationary draw.
    Values(Vec<f64>),
}

/// Per-node filters plus running log LR and log SR statistics.
pub struct LrProcess {
    log_weights: Vec<f64>,
    null: NodeFilter,
    nodes: Vec<NodeFilter>,
    log_lr: Vec<f64>,
    log_sr: Vec<f64>,
    last_g: Vec<f64>,
    log_q: f64,
    n: u64,
    rng: ChaCha12Rng,
    scratch: Vec<f64>,
}

impl Clone for LrProcess {
    fn clone(&self) -> Self {
        LrProcess {
            log_weights: self.log_weights.clone(),
            null: self.null.clone(),
            nodes: self.nodes.clone(),
            log_lr: self.log_lr.clone(),
            log_sr: self.log_sr.clone(),
            last_g: self.last_g.clone(),
            log_q: self.log_q,
            n: self.n,
            rng: self.rng.clone(),
            scratch: self.scratch.clone(),
        }
    }
}

impl LrProcess {
    /// Build from a shared model bank. `q` is the geometric-prior knob of the
    /// SR recursion; q = 1 is the pure SR sum. `rng` feeds the particle
    /// engine only; the exact engine never draws.
    pub fn new(
        bank: &ModelBank,
        engine: &Engine,
        init: &SrInit,
        q: f64,
        mut rng: ChaCha12Rng,
    ) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidConfig("q must lie in (0, 1]".into()));
        }
        let make = |model: &Arc<GaussianSsm>, rng: &mut ChaCha12Rng| -> Result<NodeFilter> {
            Ok(match engine {
                Engine::Exact => NodeFilter::Kalman(KalmanFilter::new(Arc::clone(model))),
                Engine::Particle { particles } => {
                    NodeFilter::Particle(ParticleFilter::new(Arc::clone(model), *particles, rng)?)
                }
            })
        };
        let null = make(&bank.null, &mut rng)?;
        let nodes = bank
            .nodes
            .iter()
            .map(|m| make(m, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let m = nodes.len();
        let log_sr = match init {
            SrInit::Zero => vec![f64::NEG_INFINITY; m],
            SrInit::WithPriorTerm => vec![0.0; m],
            SrInit::Values(vals) => {
                if vals.len() != m {
                    return Err(Error::InvalidConfig(
                        "initial SR values must match the grid size".into(),
                    ));
                }
                vals.clone()
            }
        };
        Ok(LrProcess {
            log_weights: bank.grid.log_weights().to_vec(),
            null,
            nodes,
            log_lr: vec![0.0; m],
            log_sr,
            last_g: vec![0.0; m],
            log_q: q.ln(),
            n: 0,
            rng,
            scratch: vec![0.0; m],
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Advance every node on one observation.
    pub fn step(&mut self, y: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<()> {
        self.n += 1;
        let l0 = self.null.step(y, u, &mut self.rng)?;
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let li = node.step(y, u, &mut self.rng)?;
            let g = li - l0;
            if g.is_nan() {
                return Err(Error::DegenerateObservationCov { step: self.n });
            }
            self.last_g[i] = g;
            self.log_lr[i] += g;
            self.log_sr[i] = log_sr_next(self.log_sr[i], g, self.log_q);
        }
        Ok(())
    }

    /// Most recent increment g_n(θ_i).
    pub fn last_increment(&self, node: usize) -> f64 {
        self.last_g[node]
    }

    /// Running log LR_n(θ_i).
    pub fn log_lr(&self, node: usize) -> f64 {
        self.log_lr[node]
    }

    /// Windowed ratio log LR_n^k(θ_i) = log LR_n − log LR_k given the value
    /// recorded at time k.
    pub fn log_lr_from(&self, node: usize, log_lr_at_k: f64) -> f64 {
        self.log_lr[node] - log_lr_at_k
    }

    /// Running log R_n(θ_i).
    pub fn log_sr(&self, node: usize) -> f64 {
        self.log_sr[node]
    }

    /// log Σ_i w_i R_n(θ_i): the prior-mixed SR statistic.
    pub fn log_sr_mixture(&mut self) -> f64 {
        for ((s, w), r) in self
            .scratch
            .iter_mut()
            .zip(&self.log_weights)
            .zip(&self.log_sr)
        {
            *s = w + r;
        }
        logsumexp(&self.scratch)
    }

    /// log Σ_i w_i LR_n(θ_i): the prior-mixed likelihood ratio.
    pub fn log_lr_mixture(&mut self) -> f64 {
        for ((s, w), r) in self
            .scratch
            .iter_mut()
            .zip(&self.log_weights)
            .zip(&self.log_lr)
        {
            *s = w + r;
        }
        logsumexp(&self.scratch)
    }

    /// Replace the particle-engine stream (used when a population member is
    /// cloned and must diverge from its source).
    pub fn reseed_engine(&mut self, rng: ChaCha12Rng) {
        self.rng = rng;
    }
}

/// Log of the uniform-prior mixture likelihood ratio over a window of
/// independent Gaussian innovations, in closed form.
///
/// The integrand for each term l is
/// exp{ −(e_l − θ − a_l)² / 2σ²_l + (e0_l − θ0)² / 2σ0²_l } and θ is
/// integrated over (lower, upper). Completing the square gives a normal
/// integral evaluated through a tail-stable log CDF difference; precision
/// weights 1/σ²_l enter both the total α and the linear statistic.
#[allow(clippy::too_many_arguments)]
pub fn log_uniform_mixture_lr(
    e: &[f64],
    offsets: &[f64],
    sigma_post: &[f64],
    e0: &[f64],
    sigma_null: &[f64],
    theta0: f64,
    lower: f64,
    upper: f64,
) -> Result<f64> {
    let n = e.len();
    if n == 0
        || offsets.len() != n
        || sigma_post.len() != n
        || e0.len() != n
        || sigma_null.len() != n
    {
        return Err(Error::InvalidConfig(
            "mixture window slices must be non-empty and equal length".into(),
        ));
    }
    if !(lower < upper) {
        return Err(Error::InvalidConfig("mixture interval is empty".into()));
    }
    if sigma_post.iter().chain(sigma_null).any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidConfig("scales must be positive".into()));
    }
    let mut alpha = 0.0;
    let mut linear = 0.0;
    let mut quad_post = 0.0;
    let mut quad_null = 0.0;
    for l in 0..n {
        let sp2 = sigma_post[l] * sigma_post[l];
        let d = e[l] - offsets[l];
        alpha += 1.0 / sp2;
        linear += d / sp2;
        quad_post += d * d / (2.0 * sp2);
        let dn = e0[l] - theta0;
        quad_null += dn * dn / (2.0 * sigma_null[l] * sigma_null[l]);
    }
    let center = linear / alpha;
    let root = alpha.sqrt();
    let lo = (lower - center) * root;
    let hi = (upper - center) * root;
    Ok(quad_null - quad_post + linear * linear / (2.0 * alpha) + 0.5 * LN_2PI - 0.5 * alpha.ln()
        + log_norm_cdf_diff(lo, hi))
}
