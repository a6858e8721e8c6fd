//! Quasi-stationary randomized initialization for the SRP rule.
//!
//! The target law is the fixed point of the one-step operator that advances
//! the statistic under the no-change measure and conditions on staying below
//! the threshold. It is approximated by a conditioned particle population:
//! every member carries its own filters and SR vector, members crossing B are
//! killed and replaced by copies of uniformly chosen survivors, and iteration
//! stops when successive empirical laws of the mixture statistic agree to a
//! small Kolmogorov-Smirnov distance.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::sync::Arc;

use crate::detect::DetectorConfig;
use crate::error::{Error, Result};
use crate::lr::{LrProcess, ModelBank, SrInit};
use crate::numerics::ks_distance;
use crate::rng::rng_from_path;
use crate::ssm::{ChangeScenario, ModelSpec, ObservationStream};

/// KS stopping tolerance between successive population laws.
pub const PSI_KS_TOL: f64 = 0.01;

const LANE_PSI_STREAM: u64 = 17;
const LANE_PSI_ENGINE: u64 = 18;
const LANE_PSI_RESAMPLE: u64 = 19;

/// Empirical quasi-stationary law of the per-node log SR values.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PsiDistribution {
    /// One row per population member: per-grid-node log R values.
    pub sample: Vec<Vec<f64>>,
    /// One-step operator applications performed.
    pub iterations: u64,
    /// KS distance between the last two population laws.
    pub ks_last: f64,
    /// Log threshold b the law was conditioned under.
    pub threshold: f64,
}

impl PsiDistribution {
    /// Draw one initial log-R vector uniformly from the sample.
    pub fn draw(&self, rng: &mut ChaCha12Rng) -> &[f64] {
        let i = rng.random_range(0..self.sample.len());
        &self.sample[i]
    }

    /// Mean of the mixture statistic exp(log R(F)) over the sample, given the
    /// grid log-weights. Finite and below B by construction.
    pub fn mean_mixture(&self, log_weights: &[f64]) -> f64 {
        let mut total = 0.0;
        for row in &self.sample {
            let combined: Vec<f64> = row
                .iter()
                .zip(log_weights)
                .map(|(r, w)| r + w)
                .collect();
            total += crate::numerics::logsumexp(&combined).exp();
        }
        total / self.sample.len() as f64
    }
}

struct Member {
    proc: LrProcess,
    stream: ObservationStream,
}

fn population(
    model: &ModelSpec,
    theta0: f64,
    config: &DetectorConfig,
    n_particles: usize,
    seed: u64,
) -> Result<Vec<Member>> {
    let bank = ModelBank::build(model, theta0, &config.grid)?;
    let scenario = ChangeScenario::no_change(theta0);
    let mut members = Vec::with_capacity(n_particles);
    for i in 0..n_particles {
        let proc = LrProcess::new(
            &bank,
            &config.engine,
            &SrInit::Zero,
            config.q,
            rng_from_path(seed, &[LANE_PSI_ENGINE, i as u64]),
        )?;
        let stream = ObservationStream::from_parts(
            Arc::clone(&bank.null),
            Arc::clone(&bank.null),
            scenario.omega,
            rng_from_path(seed, &[LANE_PSI_STREAM, i as u64]),
        );
        members.push(Member { proc, stream });
    }
    Ok(members)
}

fn advance_population(
    members: &mut [Member],
    threshold: f64,
    iter: u64,
    seed: u64,
    resample_rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    // One observation per member.
    for m in members.iter_mut() {
        let y = m.stream.next_observation().clone();
        let u = m.stream.current_input().cloned();
        m.proc.step(&y, u.as_ref())?;
    }
    let stats: Vec<f64> = members
        .iter_mut()
        .map(|m| m.proc.log_sr_mixture())
        .collect();
    let survivors: Vec<usize> = (0..members.len())
        .filter(|&i| stats[i] < threshold)
        .collect();
    if survivors.is_empty() {
        return Err(Error::QuasiStationaryCollapse { iter });
    }
    let mut out = Vec::with_capacity(members.len());
    for i in 0..members.len() {
        if stats[i] < threshold {
            out.push(stats[i]);
            continue;
        }
        // Replace the killed member's statistic state with a survivor's; its
        // own observation stream keeps running, which keeps the copies
        // independent from the next step on.
        let j = survivors[resample_rng.random_range(0..survivors.len())];
        let donor = members[j].proc.clone();
        members[i].proc = donor;
        members[i]
            .proc
            .reseed_engine(rng_from_path(seed, &[LANE_PSI_ENGINE, i as u64, iter]));
        out.push(stats[j]);
    }
    Ok(out)
}

fn finish(members: &[Member], iterations: u64, ks_last: f64, threshold: f64) -> PsiDistribution {
    let sample: Vec<Vec<f64>> = members
        .iter()
        .map(|m| {
            (0..m.proc.node_count())
                .map(|i| m.proc.log_sr(i))
                .collect()
        })
        .collect();
    PsiDistribution {
        sample,
        iterations,
        ks_last,
        threshold,
    }
}

/// Approximate the quasi-stationary initialization law.
///
/// Stops when the KS distance between successive population laws falls below
/// [`PSI_KS_TOL`] (after at least two iterations) or after `n_iters`
/// applications.
pub fn estimate_psi(
    model: &ModelSpec,
    theta0: f64,
    config: &DetectorConfig,
    n_particles: usize,
    n_iters: u64,
    seed: u64,
) -> Result<PsiDistribution> {
    if n_particles < 1000 {
        return Err(Error::InvalidConfig(
            "quasi-stationary estimation needs ≥ 1000 particles".into(),
        ));
    }
    if n_iters < 2 {
        return Err(Error::InvalidConfig("need at least two iterations".into()));
    }
    config.validate(theta0)?;
    let mut members = population(model, theta0, config, n_particles, seed)?;
    let mut resample_rng = rng_from_path(seed, &[LANE_PSI_RESAMPLE]);
    let mut prev: Option<Vec<f64>> = None;
    let mut ks_last = f64::INFINITY;
    for iter in 1..=n_iters {
        let stats = advance_population(&mut members, config.threshold, iter, seed, &mut resample_rng)?;
        if let Some(p) = &prev {
            ks_last = ks_distance(p, &stats);
            if iter >= 2 && ks_last < PSI_KS_TOL {
                return Ok(finish(&members, iter, ks_last, config.threshold));
            }
        }
        prev = Some(stats);
    }
    Ok(finish(&members, n_iters, ks_last, config.threshold))
}

/// Run the conditioned population for exactly `iters` applications, with no
/// early stop. Used to probe fixed-point self-consistency.
pub fn psi_iterated(
    model: &ModelSpec,
    theta0: f64,
    config: &DetectorConfig,
    n_particles: usize,
    iters: u64,
    seed: u64,
) -> Result<PsiDistribution> {
    if n_particles < 1000 {
        return Err(Error::InvalidConfig(
            "quasi-stationary estimation needs ≥ 1000 particles".into(),
        ));
    }
    config.validate(theta0)?;
    let mut members = population(model, theta0, config, n_particles, seed)?;
    let mut resample_rng = rng_from_path(seed, &[LANE_PSI_RESAMPLE]);
    let mut prev: Option<Vec<f64>> = None;
    let mut ks_last = f64::INFINITY;
    for iter in 1..=iters {
        let stats = advance_population(&mut members, config.threshold, iter, seed, &mut resample_rng)?;
        if let Some(p) = &prev {
            ks_last = ks_distance(p, &stats);
        }
        prev = Some(stats);
    }
    Ok(finish(&members, iters, ks_last, config.threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::DetectorConfig;
    use crate::prior::PriorGrid;

    #[test]
    fn deterministic_growth_exhausts_population() {
        // A point grid at θ0 makes β ≡ 1, so R_n = n for every member and the
        // whole population crosses B = e^b together.
        let model = ModelSpec::iid_gaussian();
        let config = DetectorConfig::sr_point(3.0f64.ln(), 0.0);
        let err = estimate_psi(&model, 0.0, &config, 1000, 50, 5).unwrap_err();
        assert!(matches!(err, Error::QuasiStationaryCollapse { iter } if iter == 3));
    }

    #[test]
    fn particle_floor_enforced() {
        let model = ModelSpec::iid_gaussian();
        let config = DetectorConfig::sr_point(4.0, 1.0);
        assert!(estimate_psi(&model, 0.0, &config, 10, 50, 5).is_err());
    }

    #[test]
    fn sample_respects_support_bound() {
        let model = ModelSpec::iid_gaussian();
        let grid = PriorGrid::uniform_gauss_legendre(0.5, 1.5, 5).unwrap();
        let config = DetectorConfig::weighted(50.0f64.ln(), grid.clone());
        let psi = estimate_psi(&model, 0.0, &config, 1000, 200, 11).unwrap();
        let mean = psi.mean_mixture(grid.log_weights());
        assert!(mean.is_finite());
        assert!(mean < 50.0, "mean {mean} must stay below B");
        assert_eq!(psi.sample.len(), 1000);
        assert_eq!(psi.sample[0].len(), 5);
    }
}
