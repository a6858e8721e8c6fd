//! Replication engine for operating characteristics: run-length means,
//! conditional detection delays, worst-case tables, equalizer deviations, and
//! crossing probabilities, every one with a standard error.
//!
//! Replication r draws from streams derived from (master_seed, r); results
//! collect in replication order and reduce sequentially, so estimates are
//! bit-identical across thread counts.

use rayon::prelude::*;

use crate::detect::{Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::numerics::mean_se;
use crate::rng::fold_seed;
use crate::ssm::{ChangeScenario, ChangeTime, ModelSpec};

/// Qualifier attached to an estimate when its interpretation is limited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum EstimateFlag {
    /// Censoring truncated enough mass that the mean is a lower bound.
    LowerBound,
    /// Too few effective replications survived conditioning.
    Unreliable,
    /// The quantity is numerically degenerate (e.g. zero variance).
    Degenerate,
    /// A positivity requirement failed beyond sampling error.
    NonPositive,
}

/// A Monte Carlo estimate and its provenance.
#[derive(Debug, Clone, serde::Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    /// Replications contributing to the mean.
    pub n_effective: u64,
    /// Replications censored at a step cap.
    pub n_censored: u64,
    /// Replications discarded by conditioning (e.g. alarm before the change).
    pub n_discarded: u64,
    pub master_seed: u64,
    pub flag: Option<EstimateFlag>,
}

impl McEstimate {
    /// Estimate with no censoring or conditioning.
    pub fn exact(mean: f64, se: f64, n_effective: u64, master_seed: u64) -> Self {
        McEstimate {
            mean,
            se,
            n_effective,
            n_censored: 0,
            n_discarded: 0,
            master_seed,
            flag: None,
        }
    }
}

/// Parallel map over replication indices, collected in index order.
pub fn replicate<T: Send>(
    n_reps: u64,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..n_reps).into_par_iter().map(f).collect()
}

/// Run `f` under a dedicated thread pool of the given size (None = caller's
/// pool). Estimates are thread-count invariant, so this only controls
/// resource use.
pub fn with_thread_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
    }
}

fn require_reps(n_reps: u64) -> Result<()> {
    if n_reps < 100 {
        return Err(Error::InvalidConfig(
            "estimates require at least 100 replications".into(),
        ));
    }
    Ok(())
}

/// Average run length to false alarm E∞N. Censored runs contribute the cap,
/// making the mean a lower bound; beyond 5% censoring the estimate is
/// flagged.
pub fn arl_false_alarm(
    model: &ModelSpec,
    scenario: &ChangeScenario,
    config: &DetectorConfig,
    n_reps: u64,
    master_seed: u64,
) -> Result<McEstimate> {
    require_reps(n_reps)?;
    if scenario.omega != ChangeTime::Never {
        return Err(Error::InvalidConfig(
            "ARL to false alarm is defined under the no-change scenario".into(),
        ));
    }
    let det = Detector::new(model, scenario, config.clone())?;
    let reports = replicate(n_reps, |rep| det.run(fold_seed(master_seed, &[rep])))?;
    let values: Vec<f64> = reports
        .iter()
        .map(|r| r.stop_time.unwrap_or(config.max_steps) as f64)
        .collect();
    let n_censored = reports.iter().filter(|r| r.is_censored()).count() as u64;
    let (mean, se) = mean_se(&values);
    Ok(McEstimate {
        mean,
        se,
        n_effective: n_reps - n_censored,
        n_censored,
        n_discarded: 0,
        master_seed,
        flag: (n_censored as f64 > 0.05 * n_reps as f64).then_some(EstimateFlag::LowerBound),
    })
}

/// Mean stop time E₁N under a change at time 1 (no conditioning involved).
pub fn delay_to_alarm(
    model: &ModelSpec,
    scenario: &ChangeScenario,
    config: &DetectorConfig,
    n_reps: u64,
    master_seed: u64,
) -> Result<McEstimate> {
    require_reps(n_reps)?;
    if scenario.omega != ChangeTime::At(1) {
        return Err(Error::InvalidConfig(
            "mean stop time from the start requires a change at time 1".into(),
        ));
    }
    let det = Detector::new(model, scenario, config.clone())?;
    let reports = replicate(n_reps, |rep| det.run(fold_seed(master_seed, &[rep])))?;
    let values: Vec<f64> = reports
        .iter()
        .map(|r| r.stop_time.unwrap_or(config.max_steps) as f64)
        .collect();
    let n_censored = reports.iter().filter(|r| r.is_censored()).count() as u64;
    let (mean, se) = mean_se(&values);
    Ok(McEstimate {
        mean,
        se,
        n_effective: n_reps - n_censored,
        n_censored,
        n_discarded: 0,
        master_seed,
        flag: (n_censored as f64 > 0.01 * n_reps as f64).then_some(EstimateFlag::LowerBound),
    })
}

/// Conditional detection delay E_ω(N − ω | N ≥ ω): replications that alarm
/// before the change are discarded, censored runs contribute the cap as a
/// lower bound.
pub fn conditional_delay(
    model: &ModelSpec,
    scenario: &ChangeScenario,
    config: &DetectorConfig,
    n_reps: u64,
    master_seed: u64,
) -> Result<McEstimate> {
    require_reps(n_reps)?;
    let ChangeTime::At(omega) = scenario.omega else {
        return Err(Error::InvalidConfig(
            "conditional delay requires a finite change time".into(),
        ));
    };
    if config.max_steps <= omega {
        return Err(Error::InvalidConfig(
            "step cap must exceed the change time".into(),
        ));
    }
    let det = Detector::new(model, scenario, config.clone())?;
    let reports = replicate(n_reps, |rep| det.run(fold_seed(master_seed, &[rep])))?;
    let mut values = Vec::with_capacity(n_reps as usize);
    let mut n_censored = 0u64;
    let mut n_discarded = 0u64;
    for r in &reports {
        match r.stop_time {
            Some(n) if n < omega => n_discarded += 1,
            Some(n) => values.push((n - omega) as f64),
            None => {
                n_censored += 1;
                values.push((config.max_steps - omega) as f64);
            }
        }
    }
    if values.len() < 2 {
        return Err(Error::InvalidConfig(
            "no replications survived the conditioning".into(),
        ));
    }
    let (mean, se) = mean_se(&values);
    let survivors = values.len() as u64;
    let flag = if (survivors as f64) < 0.1 * n_reps as f64 {
        Some(EstimateFlag::Unreliable)
    } else if n_censored > 0 {
        Some(EstimateFlag::LowerBound)
    } else {
        None
    };
    Ok(McEstimate {
        mean,
        se,
        n_effective: survivors - n_censored,
        n_censored,
        n_discarded,
        master_seed,
        flag,
    })
}

/// One cell of a delay table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DelayCell {
    pub omega: u64,
    pub theta: f64,
    pub estimate: McEstimate,
}

/// Conditional delays over an (ω, θ) grid with the grid maximum.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DelayTable {
    pub cells: Vec<DelayCell>,
    pub max_index: usize,
}

impl DelayTable {
    pub fn max_cell(&self) -> &DelayCell {
        &self.cells[self.max_index]
    }
}

/// Delay table over the product grid, plus its maximum cell (the finite-grid
/// stand-in for the worst case over change time and parameter).
pub fn sup_delay(
    model: &ModelSpec,
    theta0: f64,
    config: &DetectorConfig,
    omega_grid: &[u64],
    theta_grid: &[f64],
    n_reps: u64,
    master_seed: u64,
) -> Result<DelayTable> {
    if omega_grid.is_empty() || theta_grid.is_empty() {
        return Err(Error::InvalidConfig("delay grids must be non-empty".into()));
    }
    let mut cells = Vec::with_capacity(omega_grid.len() * theta_grid.len());
    for (ti, &theta) in theta_grid.iter().enumerate() {
        for (oi, &omega) in omega_grid.iter().enumerate() {
            let scenario = ChangeScenario::new(theta0, theta, ChangeTime::At(omega))?;
            let estimate = conditional_delay(
                model,
                &scenario,
                config,
                n_reps,
                fold_seed(master_seed, &[ti as u64, oi as u64]),
            )?;
            cells.push(DelayCell {
                omega,
                theta,
                estimate,
            });
        }
    }
    let max_index = cells
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.estimate.mean.total_cmp(&b.1.estimate.mean))
        .map(|(i, _)| i)
        .unwrap();
    Ok(DelayTable { cells, max_index })
}

/// Deviation of one post-change start from the ω = 1 baseline.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EqualizerRow {
    pub k: u64,
    /// E_k(N − k + 1 | N ≥ k − 1).
    pub estimate: McEstimate,
    /// estimate − baseline.
    pub deviation: f64,
    /// Combined standard error of the deviation.
    pub deviation_se: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EqualizerReport {
    /// E₁N.
    pub baseline: McEstimate,
    pub rows: Vec<EqualizerRow>,
}

/// Conditional run lengths E_k(N − k + 1 | N ≥ k − 1) against E₁N.
///
/// All change times share replication seeds, so the k = 1 row reproduces the
/// baseline exactly and deviations are estimated on common random numbers.
pub fn equalizer_check(
    model: &ModelSpec,
    theta0: f64,
    theta_true: f64,
    config: &DetectorConfig,
    k_list: &[u64],
    n_reps: u64,
    master_seed: u64,
) -> Result<EqualizerReport> {
    require_reps(n_reps)?;
    let run_at = |k: u64| -> Result<(Vec<f64>, u64, u64)> {
        let scenario = ChangeScenario::new(theta0, theta_true, ChangeTime::At(k))?;
        let det = Detector::new(model, &scenario, config.clone())?;
        let reports = replicate(n_reps, |rep| det.run(fold_seed(master_seed, &[rep])))?;
        let mut values = Vec::with_capacity(n_reps as usize);
        let mut censored = 0u64;
        let mut discarded = 0u64;
        for r in &reports {
            match r.stop_time {
                Some(n) if n + 1 < k => discarded += 1,
                Some(n) => values.push((n + 1 - k) as f64),
                None => {
                    censored += 1;
                    values.push((config.max_steps + 1 - k) as f64);
                }
            }
        }
        Ok((values, censored, discarded))
    };

    let (base_vals, base_cens, base_disc) = run_at(1)?;
    let (base_mean, base_se) = mean_se(&base_vals);
    let baseline = McEstimate {
        mean: base_mean,
        se: base_se,
        n_effective: base_vals.len() as u64 - base_cens,
        n_censored: base_cens,
        n_discarded: base_disc,
        master_seed,
        flag: None,
    };

    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let (vals, censored, discarded) = run_at(k)?;
        let (mean, se) = mean_se(&vals);
        let estimate = McEstimate {
            mean,
            se,
            n_effective: vals.len() as u64 - censored,
            n_censored: censored,
            n_discarded: discarded,
            master_seed,
            flag: ((vals.len() as f64) < 0.1 * n_reps as f64).then_some(EstimateFlag::Unreliable),
        };
        rows.push(EqualizerRow {
            k,
            deviation: mean - base_mean,
            deviation_se: (se * se + base_se * base_se).sqrt(),
            estimate,
        });
    }
    Ok(EqualizerReport { baseline, rows })
}

/// Empirical crossing probability P∞{N ≤ horizon}.
pub fn false_alarm_prob(
    model: &ModelSpec,
    scenario: &ChangeScenario,
    config: &DetectorConfig,
    horizon: u64,
    n_reps: u64,
    master_seed: u64,
) -> Result<McEstimate> {
    require_reps(n_reps)?;
    if scenario.omega != ChangeTime::Never {
        return Err(Error::InvalidConfig(
            "crossing probability is evaluated under the no-change scenario".into(),
        ));
    }
    if horizon == 0 {
        return Ok(McEstimate::exact(0.0, 0.0, n_reps, master_seed));
    }
    let mut cfg = config.clone();
    cfg.max_steps = horizon;
    let det = Detector::new(model, scenario, cfg)?;
    let reports = replicate(n_reps, |rep| det.run(fold_seed(master_seed, &[rep])))?;
    let crossed = reports.iter().filter(|r| !r.is_censored()).count() as f64;
    let p = crossed / n_reps as f64;
    let se = (p * (1.0 - p) / n_reps as f64).sqrt();
    Ok(McEstimate::exact(p, se, n_reps, master_seed))
}

/// A batch of scenarios × detector configurations to run with shared seeds.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub model: ModelSpec,
    pub theta0: f64,
    pub theta_grid: Vec<f64>,
    pub omega_grid: Vec<u64>,
    pub thresholds: Vec<f64>,
    pub base_config: DetectorConfig,
    pub n_reps: u64,
    pub master_seed: u64,
}

/// One output row of a plan run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PlanRow {
    pub kind: &'static str,
    pub b: f64,
    pub omega: Option<u64>,
    pub theta: Option<f64>,
    pub estimate: McEstimate,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::InvalidConfig("plan needs thresholds".into()));
        }
        if self.n_reps < 100 {
            return Err(Error::InvalidConfig("plan needs ≥ 100 replications".into()));
        }
        Ok(())
    }

    /// ARL to false alarm for every threshold.
    pub fn run_arl(&self) -> Result<Vec<PlanRow>> {
        self.validate()?;
        let scenario = ChangeScenario::no_change(self.theta0);
        let mut rows = Vec::new();
        for (bi, &b) in self.thresholds.iter().enumerate() {
            let mut cfg = self.base_config.clone();
            cfg.threshold = b;
            let estimate = arl_false_alarm(
                &self.model,
                &scenario,
                &cfg,
                self.n_reps,
                fold_seed(self.master_seed, &[100, bi as u64]),
            )?;
            rows.push(PlanRow {
                kind: "arl",
                b,
                omega: None,
                theta: None,
                estimate,
            });
        }
        Ok(rows)
    }

    /// Conditional delays over the (ω, θ) grid for every threshold.
    pub fn run_delays(&self) -> Result<Vec<PlanRow>> {
        self.validate()?;
        if self.theta_grid.is_empty() || self.omega_grid.is_empty() {
            return Err(Error::InvalidConfig("plan needs ω and θ grids".into()));
        }
        let mut rows = Vec::new();
        for (bi, &b) in self.thresholds.iter().enumerate() {
            let mut cfg = self.base_config.clone();
            cfg.threshold = b;
            let table = sup_delay(
                &self.model,
                self.theta0,
                &cfg,
                &self.omega_grid,
                &self.theta_grid,
                self.n_reps,
                fold_seed(self.master_seed, &[200, bi as u64]),
            )?;
            for cell in table.cells {
                rows.push(PlanRow {
                    kind: "delay",
                    b,
                    omega: Some(cell.omega),
                    theta: Some(cell.theta),
                    estimate: cell.estimate,
                });
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::PriorGrid;

    #[test]
    fn rep_floor_is_enforced() {
        let model = ModelSpec::iid_gaussian();
        let scenario = ChangeScenario::no_change(0.0);
        let config = DetectorConfig::sr_point(4.0, 1.0);
        assert!(arl_false_alarm(&model, &scenario, &config, 10, 1).is_err());
    }

    #[test]
    fn zero_horizon_crossing_probability_is_zero() {
        let model = ModelSpec::iid_gaussian();
        let scenario = ChangeScenario::no_change(0.0);
        let config = DetectorConfig::sr_point(4.0, 1.0);
        let est = false_alarm_prob(&model, &scenario, &config, 0, 200, 1).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn scenario_kind_mismatches_are_rejected() {
        let model = ModelSpec::iid_gaussian();
        let changed = ChangeScenario::new(0.0, 1.0, ChangeTime::At(1)).unwrap();
        let config = DetectorConfig::sr_point(4.0, 1.0);
        assert!(arl_false_alarm(&model, &changed, &config, 200, 1).is_err());
        let never = ChangeScenario::no_change(0.0);
        assert!(conditional_delay(&model, &never, &config, 200, 1).is_err());
    }

    #[test]
    fn plan_validation() {
        let grid = PriorGrid::uniform_gauss_legendre(0.5, 1.5, 5).unwrap();
        let plan = ExperimentPlan {
            model: ModelSpec::iid_gaussian(),
            theta0: 0.0,
            theta_grid: vec![1.0],
            omega_grid: vec![1],
            thresholds: vec![],
            base_config: DetectorConfig::weighted(4.0, grid),
            n_reps: 200,
            master_seed: 1,
        };
        assert!(plan.validate().is_err());
    }
}
