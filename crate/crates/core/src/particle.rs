//! Bootstrap particle filter for approximate predictive likelihoods.
//!
//! Proposal is the state transition itself; the incremental likelihood is
//! accumulated in the log domain as log Σ w_i f(y | x_i') over the propagated
//! cloud, and systematic resampling triggers when the effective sample size
//! drops below half the cloud.

use nalgebra::{Cholesky, DVector, Dyn};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{logsumexp, LN_2PI};
use crate::ssm::GaussianSsm;

/// Weighted particle population with its running log-likelihood estimate.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    pub particles: Vec<DVector<f64>>,
    /// Normalized: logsumexp(log_weights) = 0.
    pub log_weights: Vec<f64>,
    /// Accumulated log-likelihood estimate Σ log p̂(y_k | y_{1:k-1}).
    pub log_likelihood: f64,
    /// Most recent incremental term.
    pub last_increment: f64,
}

impl ParticleCloud {
    /// Cloud of `count` stationary draws with uniform weights.
    pub fn stationary(model: &GaussianSsm, count: usize, rng: &mut ChaCha12Rng) -> Result<Self> {
        if count < 1 {
            return Err(Error::InvalidConfig("particle count must be ≥ 1".into()));
        }
        let particles = (0..count).map(|_| model.stationary_draw(rng)).collect();
        Ok(Self::from_points(particles))
    }

    /// Cloud at fixed points with uniform weights.
    pub fn from_points(particles: Vec<DVector<f64>>) -> Self {
        let m = particles.len();
        assert!(m >= 1);
        let w = -(m as f64).ln();
        ParticleCloud {
            particles,
            log_weights: vec![w; m],
            log_likelihood: 0.0,
            last_increment: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Effective sample size 1 / Σ w².
    pub fn ess(&self) -> f64 {
        let two: Vec<f64> = self.log_weights.iter().map(|w| 2.0 * w).collect();
        (-logsumexp(&two)).exp()
    }
}

/// Indices drawn by systematic resampling from normalized log-weights.
pub fn systematic_resample(log_weights: &[f64], rng: &mut ChaCha12Rng) -> Vec<usize> {
    let m = log_weights.len();
    let mut out = Vec::with_capacity(m);
    let u0: f64 = rng.random::<f64>() / m as f64;
    let mut cum = 0.0;
    let mut i = 0usize;
    for k in 0..m {
        let target = u0 + k as f64 / m as f64;
        while cum + log_weights[i].exp() < target && i < m - 1 {
            cum += log_weights[i].exp();
            i += 1;
        }
        out.push(i);
    }
    out
}

/// A running bootstrap filter bound to one materialized parameter value.
pub struct ParticleFilter {
    model: Arc<GaussianSsm>,
    pub cloud: ParticleCloud,
    obs_chol: Cholesky<f64, Dyn>,
    obs_log_det: f64,
    step: u64,
}

impl Clone for ParticleFilter {
    fn clone(&self) -> Self {
        ParticleFilter {
            model: Arc::clone(&self.model),
            cloud: self.cloud.clone(),
            obs_chol: Cholesky::new(self.model.obs_cov().clone()).expect("validated at build"),
            obs_log_det: self.obs_log_det,
            step: self.step,
        }
    }
}

impl std::fmt::Debug for ParticleFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParticleFilter")
            .field("particles", &self.cloud.len())
            .field("step", &self.step)
            .finish()
    }
}

impl ParticleFilter {
    pub fn new(model: Arc<GaussianSsm>, count: usize, rng: &mut ChaCha12Rng) -> Result<Self> {
        let cloud = ParticleCloud::stationary(&model, count, rng)?;
        Self::with_cloud(model, cloud)
    }

    pub fn with_cloud(model: Arc<GaussianSsm>, cloud: ParticleCloud) -> Result<Self> {
        let obs_chol = Cholesky::new(model.obs_cov().clone())
            .ok_or(Error::DegenerateObservationCov { step: 0 })?;
        let obs_log_det: f64 = obs_chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        Ok(ParticleFilter {
            model,
            cloud,
            obs_chol,
            obs_log_det,
            step: 0,
        })
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Propagate, weight, accumulate the incremental log-likelihood, and
    /// resample if the effective sample size fell below half the cloud.
    pub fn step_logpred(
        &mut self,
        y: &DVector<f64>,
        u: Option<&DVector<f64>>,
        rng: &mut ChaCha12Rng,
    ) -> Result<f64> {
        self.step += 1;
        let m = self.cloud.len();
        let mut log_f = vec![0.0f64; m];

        if let Some(s) = self.model.scalar().copied() {
            for (x, lf) in self.cloud.particles.iter_mut().zip(log_f.iter_mut()) {
                let z: f64 = rng.sample(StandardNormal);
                let next = s.f * x[0] + s.q_sd * z;
                x[0] = next;
                let e = y[0] - s.h * next - s.offset;
                *lf = -0.5 * (LN_2PI + s.r.ln() + e * e / s.r);
            }
        } else {
            let p = self.model.state_dim();
            let model = &self.model;
            let obs_chol = &self.obs_chol;
            let obs_log_det = self.obs_log_det;
            let mut noise = DVector::zeros(p);
            for (x, lf) in self.cloud.particles.iter_mut().zip(log_f.iter_mut()) {
                for z in noise.iter_mut() {
                    *z = rng.sample(StandardNormal);
                }
                let mut next = model.transition() * &*x;
                if let (Some(g), Some(uv)) = (model.input_matrix(), u) {
                    next += g * uv;
                }
                next += model.state_noise_chol() * &noise;
                *x = next;
                let mut resid = y - model.observation() * &*x - model.obs_offset();
                if let (Some(j), Some(uv)) = (model.feedthrough(), u) {
                    resid -= j * uv;
                }
                let solved = obs_chol.solve(&resid);
                let quad = resid.dot(&solved);
                *lf = -0.5 * (model.obs_dim() as f64 * LN_2PI + obs_log_det + quad);
            }
        }

        let combined: Vec<f64> = self
            .cloud
            .log_weights
            .iter()
            .zip(&log_f)
            .map(|(w, f)| w + f)
            .collect();
        let incr = logsumexp(&combined);
        if !incr.is_finite() {
            return Err(Error::ParticleCollapse { step: self.step });
        }
        for (w, c) in self.cloud.log_weights.iter_mut().zip(&combined) {
            *w = c - incr;
        }
        self.cloud.log_likelihood += incr;
        self.cloud.last_increment = incr;

        if self.cloud.ess() < m as f64 / 2.0 {
            let idx = systematic_resample(&self.cloud.log_weights, rng);
            let picked: Vec<DVector<f64>> = idx
                .iter()
                .map(|&i| self.cloud.particles[i].clone())
                .collect();
            self.cloud.particles = picked;
            let w = -(m as f64).ln();
            for lw in self.cloud.log_weights.iter_mut() {
                *lw = w;
            }
        }
        Ok(incr)
    }
}

/// One bootstrap update of a standalone cloud.
pub fn particle_step(
    model: &Arc<GaussianSsm>,
    cloud: &mut ParticleCloud,
    y: &DVector<f64>,
    u: Option<&DVector<f64>>,
    rng: &mut ChaCha12Rng,
) -> Result<f64> {
    let mut filter = ParticleFilter::with_cloud(Arc::clone(model), cloud.clone())?;
    let incr = filter.step_logpred(y, u, rng)?;
    *cloud = filter.cloud;
    Ok(incr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_path;
    use crate::ssm::ModelSpec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_deterministic_particle_is_plugin_likelihood() {
        // Σ1 = 0 and a known start make the filter a plug-in density.
        let spec = ModelSpec::scalar_linear_gaussian(0.6, 0.0, 1.0).unwrap();
        let ssm = Arc::new(spec.at(0.3).unwrap());
        let x0 = DVector::from_element(1, 0.5);
        let cloud = ParticleCloud::from_points(vec![x0]);
        let mut filter = ParticleFilter::with_cloud(Arc::clone(&ssm), cloud).unwrap();
        let mut rng = rng_from_path(1, &[]);
        let mut x = 0.5;
        for yv in [0.2, -0.4, 1.0] {
            let y = DVector::from_element(1, yv);
            let incr = filter.step_logpred(&y, None, &mut rng).unwrap();
            x *= 0.6;
            let e = yv - x - 0.3;
            assert_abs_diff_eq!(incr, -0.5 * (LN_2PI + e * e), epsilon = 1e-12);
        }
    }

    #[test]
    fn resampling_resets_weights_to_uniform() {
        let spec = ModelSpec::scalar_linear_gaussian(0.5, 1.0, 0.05).unwrap();
        let ssm = Arc::new(spec.at(0.0).unwrap());
        let mut rng = rng_from_path(7, &[]);
        let mut filter = ParticleFilter::new(Arc::clone(&ssm), 64, &mut rng).unwrap();
        // A far-out observation skews the weights enough to force resampling.
        let y = DVector::from_element(1, 8.0);
        filter.step_logpred(&y, None, &mut rng).unwrap();
        let expect = -(64f64).ln();
        for w in &filter.cloud.log_weights {
            assert_abs_diff_eq!(*w, expect, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(filter.cloud.ess(), 64.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_observation_noise_is_rejected() {
        let spec = ModelSpec::ar_mean_shift(vec![0.5], 1.0).unwrap();
        let ssm = Arc::new(spec.at(0.0).unwrap());
        let mut rng = rng_from_path(7, &[]);
        assert!(matches!(
            ParticleFilter::new(ssm, 8, &mut rng),
            Err(Error::DegenerateObservationCov { .. })
        ));
    }

    #[test]
    fn systematic_resample_tracks_weights() {
        let mut rng = rng_from_path(3, &[]);
        // One particle carries 3/4 of the mass.
        let mut lws = vec![0.75f64.ln()];
        lws.extend(std::iter::repeat_n((0.25f64 / 3.0).ln(), 3));
        let mut counts = [0usize; 4];
        for _ in 0..200 {
            for i in systematic_resample(&lws, &mut rng) {
                counts[i] += 1;
            }
        }
        let share = counts[0] as f64 / 800.0;
        assert!((share - 0.75).abs() < 0.05, "share {share}");
    }
}
