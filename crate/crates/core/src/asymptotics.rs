//! Constants of the second-order delay expansion, estimated by Monte Carlo,
//! plus the computable drift-condition checks for the two worked model
//! classes.
//!
//! All walks S_n = log LR_n(θ) run under the post-change measure with the
//! change at time 1 and the hidden state started from the pre-change
//! stationary law; replication streams derive from (master_seed, rep), so
//! every estimate here is a pure function of its arguments.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::harness::{replicate, EstimateFlag, McEstimate};
use crate::lr::{Engine, LrProcess, ModelBank, SrInit};
use crate::numerics::{mean_se, LN_2PI};
use crate::prior::PriorGrid;
use crate::rng::{fold_seed, rng_from_path, LANE_ENGINE};
use crate::ssm::{ChangeScenario, ChangeTime, ModelSpec, ObservationStream};

/// Step cap for first-passage and tail-accumulation walks.
pub const WALK_CAP: u64 = 1_000_000;

/// A log-LR increment stream at a single candidate θ under the post-change
/// measure (change at time 1).
pub(crate) struct IncrementStream {
    stream: ObservationStream,
    proc: LrProcess,
}

impl IncrementStream {
    /// `theta_data` is the parameter generating the observations; the walk's
    /// numerator runs at the bank's single grid node and its denominator at
    /// the bank's θ0.
    pub(crate) fn new(
        bank: &ModelBank,
        model: &ModelSpec,
        theta_data: f64,
        seed: u64,
    ) -> Result<Self> {
        let scenario = if theta_data == bank.theta0 {
            ChangeScenario::no_change(bank.theta0)
        } else {
            ChangeScenario::new(bank.theta0, theta_data, ChangeTime::At(1))?
        };
        let stream = ObservationStream::new(model, &scenario, seed)?;
        let proc = LrProcess::new(
            bank,
            &Engine::Exact,
            &SrInit::Zero,
            1.0,
            rng_from_path(seed, &[LANE_ENGINE]),
        )?;
        Ok(IncrementStream { stream, proc })
    }

    pub(crate) fn next_increment(&mut self) -> Result<f64> {
        let y = self.stream.next_observation().clone();
        let u = self.stream.current_input().cloned();
        self.proc.step(&y, u.as_ref())?;
        Ok(self.proc.last_increment(0))
    }
}

fn point_bank(model: &ModelSpec, theta: f64, theta0: f64) -> Result<ModelBank> {
    ModelBank::build(model, theta0, &PriorGrid::point(theta))
}

/// Kullback-Leibler information per observation: the long-run mean of the
/// log-LR increment under the post-change measure, estimated as the mean of
/// (1/n) log LR_n over independent replications.
pub fn estimate_kl(
    model: &ModelSpec,
    theta: f64,
    theta0: f64,
    n_steps: u64,
    n_reps: u64,
    master_seed: u64,
) -> Result<McEstimate> {
    if theta == theta0 {
        return Err(Error::InvalidConfig(
            "information number requires θ ≠ θ0".into(),
        ));
    }
    if n_steps < 1 {
        return Err(Error::InvalidConfig("need at least one step".into()));
    }
    let bank = point_bank(model, theta, theta0)?;
    let values = replicate(n_reps, |rep| -> Result<f64> {
        let mut inc = IncrementStream::new(&bank, model, theta, fold_seed(master_seed, &[rep]))?;
        let mut total = 0.0;
        for _ in 0..n_steps {
            total += inc.next_increment()?;
        }
        Ok(total / n_steps as f64)
    })?;
    let (mean, se) = mean_se(&values);
    let mut est = McEstimate::exact(mean, se, n_reps, master_seed);
    if mean <= 3.0 * se {
        est.flag = Some(EstimateFlag::NonPositive);
    }
    Ok(est)
}

/// First strict ascent of the walk over zero, plus direct overshoot runs at
/// fixed thresholds.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LadderStats {
    /// Mean and SE of the ladder height S at the first strict ascent.
    pub mean: f64,
    pub se: f64,
    /// Mean and SE of S².
    pub mean_sq: f64,
    pub se_sq: f64,
    /// Limiting-overshoot estimate ES²/(2ES) with a delta-method SE.
    pub rho: f64,
    pub rho_se: f64,
    /// Direct mean overshoot over each threshold b.
    pub direct_overshoot: Vec<(f64, McEstimate)>,
    pub n_reps: u64,
    /// Replications abandoned at the step cap.
    pub n_aborted: u64,
    pub master_seed: u64,
}

/// Simulate ladder heights of S over 0 and direct overshoots at the given
/// thresholds (defaults {10, 20} when empty).
pub fn ladder_simulate(
    model: &ModelSpec,
    theta: f64,
    theta0: f64,
    n_reps: u64,
    thresholds: &[f64],
    master_seed: u64,
) -> Result<LadderStats> {
    let pilot = estimate_kl(model, theta, theta0, 400, 200, fold_seed(master_seed, &[u64::MAX]))?;
    if pilot.flag == Some(EstimateFlag::NonPositive) {
        return Err(Error::NonPositiveInformation {
            estimate: pilot.mean,
            se: pilot.se,
        });
    }
    let bank = point_bank(model, theta, theta0)?;
    let heights = replicate(n_reps, |rep| -> Result<Option<f64>> {
        let mut inc = IncrementStream::new(&bank, model, theta, fold_seed(master_seed, &[rep]))?;
        let mut s = 0.0;
        for _ in 0..WALK_CAP {
            s += inc.next_increment()?;
            if s > 0.0 {
                return Ok(Some(s));
            }
        }
        Ok(None)
    })?;
    let n_aborted = heights.iter().filter(|h| h.is_none()).count() as u64;
    let kept: Vec<f64> = heights.into_iter().flatten().collect();
    if kept.len() < 2 {
        return Err(Error::WalkTimeout { cap: WALK_CAP });
    }
    let (m1, se1) = mean_se(&kept);
    let sq: Vec<f64> = kept.iter().map(|s| s * s).collect();
    let (m2, se2) = mean_se(&sq);
    // Delta method for ρ = m2 / (2 m1) with the sample covariance of (S, S²).
    let n = kept.len() as f64;
    let cov12: f64 = kept
        .iter()
        .zip(&sq)
        .map(|(a, b)| (a - m1) * (b - m2))
        .sum::<f64>()
        / (n - 1.0)
        / n;
    let d1 = -m2 / (2.0 * m1 * m1);
    let d2 = 1.0 / (2.0 * m1);
    let rho_var = d1 * d1 * se1 * se1 + d2 * d2 * se2 * se2 + 2.0 * d1 * d2 * cov12;
    let rho = m2 / (2.0 * m1);
    let rho_se = rho_var.max(0.0).sqrt();

    let bs: Vec<f64> = if thresholds.is_empty() {
        vec![10.0, 20.0]
    } else {
        thresholds.to_vec()
    };
    let mut direct = Vec::with_capacity(bs.len());
    for (bi, &b) in bs.iter().enumerate() {
        let overs = replicate(n_reps, |rep| -> Result<Option<f64>> {
            let seed = fold_seed(master_seed, &[1 + bi as u64, rep]);
            let mut inc = IncrementStream::new(&bank, model, theta, seed)?;
            let mut s = 0.0;
            for _ in 0..WALK_CAP {
                s += inc.next_increment()?;
                if s >= b {
                    return Ok(Some(s - b));
                }
            }
            Ok(None)
        })?;
        let kept: Vec<f64> = overs.into_iter().flatten().collect();
        if kept.len() < 2 {
            return Err(Error::WalkTimeout { cap: WALK_CAP });
        }
        let (m, se) = mean_se(&kept);
        direct.push((b, McEstimate::exact(m, se, kept.len() as u64, master_seed)));
    }
    Ok(LadderStats {
        mean: m1,
        se: se1,
        mean_sq: m2,
        se_sq: se2,
        rho,
        rho_se,
        direct_overshoot: direct,
        n_reps,
        n_aborted,
        master_seed,
    })
}

/// E log(1 + Σ_k e^{−S_k}): the pre-crossing mass correction.
///
/// The tail is truncated once e^{−S_k} has stayed below `trunc_eps` for 20
/// consecutive steps and k exceeds 10 / K.
pub fn gamma_estimate(
    model: &ModelSpec,
    theta: f64,
    theta0: f64,
    trunc_eps: f64,
    n_reps: u64,
    master_seed: u64,
) -> Result<McEstimate> {
    if !(trunc_eps > 0.0 && trunc_eps < 1.0) {
        return Err(Error::InvalidConfig("trunc_eps must lie in (0, 1)".into()));
    }
    let pilot = estimate_kl(model, theta, theta0, 400, 200, fold_seed(master_seed, &[u64::MAX]))?;
    if pilot.flag == Some(EstimateFlag::NonPositive) {
        return Err(Error::NonPositiveInformation {
            estimate: pilot.mean,
            se: pilot.se,
        });
    }
    let min_steps = (10.0 / pilot.mean).ceil() as u64;
    let bank = point_bank(model, theta, theta0)?;
    let values = replicate(n_reps, |rep| -> Result<f64> {
        let mut inc = IncrementStream::new(&bank, model, theta, fold_seed(master_seed, &[rep]))?;
        let mut s = 0.0;
        let mut acc = 0.0;
        let mut quiet = 0u32;
        let mut k = 0u64;
        loop {
            k += 1;
            if k > WALK_CAP {
                return Err(Error::WalkTimeout { cap: WALK_CAP });
            }
            s += inc.next_increment()?;
            let term = (-s).exp();
            acc += term;
            if term < trunc_eps {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if quiet >= 20 && k > min_steps {
                return Ok(acc.ln_1p());
            }
        }
    })?;
    let (mean, se) = mean_se(&values);
    Ok(McEstimate::exact(mean, se, n_reps, master_seed))
}

/// Asymptotic variance of the walk, Var(S_n)/n over independent replications
/// (each replication is one batch; at least 30 are required).
pub fn lambda2_estimate(
    model: &ModelSpec,
    theta: f64,
    theta0: f64,
    n_steps: u64,
    n_reps: u64,
    master_seed: u64,
) -> Result<McEstimate> {
    if n_steps < 1000 {
        return Err(Error::InvalidConfig(
            "asymptotic variance needs n_steps ≥ 1000".into(),
        ));
    }
    if n_reps < 30 {
        return Err(Error::InvalidConfig("need ≥ 30 batches".into()));
    }
    let bank = point_bank(model, theta, theta0)?;
    let finals = replicate(n_reps, |rep| -> Result<f64> {
        let mut inc = IncrementStream::new(&bank, model, theta, fold_seed(master_seed, &[rep]))?;
        let mut s = 0.0;
        for _ in 0..n_steps {
            s += inc.next_increment()?;
        }
        Ok(s)
    })?;
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let lambda2 = var / n_steps as f64;
    // Chi-squared sampling error of a variance over B batches.
    let se = lambda2 * (2.0 / (n - 1.0)).sqrt();
    let mut est = McEstimate::exact(lambda2, se, n_reps, master_seed);
    if lambda2 < 1e-12 {
        est.flag = Some(EstimateFlag::Degenerate);
    }
    Ok(est)
}

/// Estimated ingredients of the second-order delay constant.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ApproxTerms {
    pub k: McEstimate,
    pub gamma: McEstimate,
    pub lambda2: McEstimate,
    pub rho: f64,
    pub rho_se: f64,
    /// Prior density at the evaluation parameter.
    pub f_prime: f64,
    /// Aggregate empirical constant fitted from stabilized residuals, when
    /// available.
    pub c_emp: Option<f64>,
}

impl ApproxTerms {
    /// The analytically available part of the constant: overshoot minus the
    /// pre-crossing mass correction minus the Laplace-window term minus 1/2.
    /// Poisson-equation and eigenfunction contributions are not estimated
    /// individually and are set to zero here, so this value is partial.
    pub fn partial_constant(&self) -> f64 {
        self.rho
            - self.gamma.mean
            - 0.5 * ((2.0 * std::f64::consts::PI * self.f_prime / self.lambda2.mean).ln())
            - 0.5
    }

    /// Expansion constant used for prediction: the fitted aggregate when
    /// present, the partial analytic value otherwise.
    pub fn constant(&self) -> f64 {
        self.c_emp.unwrap_or_else(|| self.partial_constant())
    }
}

/// Second-order predicted mean delay (1/K)(b + ½ log(b/K) + C).
pub fn predicted_delay(k: f64, c: f64, b: f64) -> f64 {
    assert!(k > 0.0, "information number must be positive");
    assert!(b > 1.0, "prediction applies to thresholds b > 1");
    (b + 0.5 * (b / k).ln() + c) / k
}

/// One point of the expansion residual Z(b) = K·E₁N_b − b − ½ log(b/K).
#[derive(Debug, Clone, serde::Serialize)]
pub struct ZPoint {
    pub b: f64,
    pub z: f64,
    pub se: f64,
    pub delay: McEstimate,
}

/// Expansion residuals over a threshold grid. Stabilization of Z(b) in b is
/// the empirical estimate of the aggregate constant.
///
/// `k_hat` is supplied by the caller so that misspecified information numbers
/// can be probed deliberately.
pub fn empirical_constant(
    model: &ModelSpec,
    scenario: &ChangeScenario,
    config: &crate::detect::DetectorConfig,
    b_grid: &[f64],
    n_reps: u64,
    k_hat: &McEstimate,
    master_seed: u64,
) -> Result<Vec<ZPoint>> {
    if b_grid.is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty".into()));
    }
    if !b_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidConfig("threshold grid must increase".into()));
    }
    if scenario.omega != ChangeTime::At(1) {
        return Err(Error::InvalidConfig(
            "expansion residuals are defined for a change at time 1".into(),
        ));
    }
    let k = k_hat.mean;
    if !(k > 0.0) {
        return Err(Error::NonPositiveInformation {
            estimate: k,
            se: k_hat.se,
        });
    }
    let mut out = Vec::with_capacity(b_grid.len());
    for (bi, &b) in b_grid.iter().enumerate() {
        let mut cfg = config.clone();
        cfg.threshold = b;
        let delay =
            crate::harness::delay_to_alarm(model, scenario, &cfg, n_reps, fold_seed(master_seed, &[bi as u64]))?;
        let z = k * delay.mean - b - 0.5 * (b / k).ln();
        // Error in K propagates with sensitivity E₁N + 1/(2K).
        let se = ((k * delay.se).powi(2)
            + ((delay.mean + 0.5 / k) * k_hat.se).powi(2))
        .sqrt();
        out.push(ZPoint { b, z, se, delay });
    }
    Ok(out)
}

/// Drift-condition report for the direct-observation AR(1) family.
#[derive(Debug, Clone, serde::Serialize)]
pub struct C2Ar1 {
    pub stationary_var: f64,
    /// Peak smoothed one-step density h = 1/sqrt(2π(1+v)).
    pub h: f64,
    /// Upper bound on the weighted log-drift; negative means the condition
    /// holds.
    pub drift_bound: f64,
    pub pass: bool,
}

/// Check the computable drift condition for AR(1) with standard normal
/// innovations, using stationary variance v = 1/(1−α²) and E|ε| = √(2/π).
pub fn check_c2_ar1(alpha: f64) -> Result<C2Ar1> {
    if !(alpha.abs() < 1.0) {
        return Err(Error::InvalidModel("|α| must be < 1".into()));
    }
    let v = 1.0 / (1.0 - alpha * alpha);
    let h = 1.0 / (2.0 * std::f64::consts::PI * (1.0 + v)).sqrt();
    let e_abs = (2.0 / std::f64::consts::PI).sqrt();
    // sup_x (|α| x + E|ε| + 1) / (x + 1) is attained at x = 0 because the
    // numerator's slope |α| is below 1.
    let sup_ratio = e_abs + 1.0;
    let drift_bound = (h * sup_ratio).ln();
    Ok(C2Ar1 {
        stationary_var: v,
        h,
        drift_bound,
        pass: drift_bound < 0.0,
    })
}

/// Drift-condition report for the linear state space family.
#[derive(Debug, Clone, serde::Serialize)]
pub struct C2LinearGaussian {
    /// Peak one-step smoothed density; the condition is a < 1.
    pub a: f64,
    pub pass: bool,
}

/// Evaluate a = |Σ1⁻¹ + Hᵀ Σ2⁻¹ H|^{-1/2} / ((2π)^{d/2} |Σ1|^{1/2} |Σ2|^{1/2})
/// for a square system (p = r = d).
pub fn check_c2_linear_gaussian(
    sigma1: &DMatrix<f64>,
    sigma2: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<C2LinearGaussian> {
    let d = sigma1.nrows();
    if sigma1.ncols() != d || sigma2.nrows() != d || sigma2.ncols() != d {
        return Err(Error::InvalidModel("covariances must be d×d".into()));
    }
    if h.nrows() != d || h.ncols() != d {
        return Err(Error::InvalidModel("H must be d×d here".into()));
    }
    let s1_inv = sigma1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidModel("Σ1 is singular".into()))?;
    let s2_inv = sigma2
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidModel("Σ2 is singular".into()))?;
    let precision = &s1_inv + h.transpose() * &s2_inv * h;
    let det_p = precision.determinant();
    let det1 = sigma1.determinant();
    let det2 = sigma2.determinant();
    if det_p <= 0.0 || det1 <= 0.0 || det2 <= 0.0 {
        return Err(Error::InvalidModel(
            "covariances must be positive definite".into(),
        ));
    }
    let log_a = -0.5 * det_p.ln()
        - 0.5 * d as f64 * LN_2PI
        - 0.5 * det1.ln()
        - 0.5 * det2.ln();
    let a = log_a.exp();
    Ok(C2LinearGaussian { a, pass: a < 1.0 })
}

/// Closed form of the peak density for the 2-d equicorrelated case with
/// H = I: h = 1 / (2π sqrt(4 − (ρ1+ρ2)²)). `None` when the square root
/// degenerates, i.e. the condition is violated rather than evaluable.
pub fn h_equicorrelated_2d(rho1: f64, rho2: f64) -> C2Equicorrelated {
    let s = rho1 + rho2;
    let disc = 4.0 - s * s;
    if disc <= 0.0 {
        return C2Equicorrelated {
            h: None,
            pass: false,
        };
    }
    let h = 1.0 / (2.0 * std::f64::consts::PI * disc.sqrt());
    C2Equicorrelated {
        h: Some(h),
        pass: h < 1.0,
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct C2Equicorrelated {
    pub h: Option<f64>,
    pub pass: bool,
}

/// The equicorrelated-2d condition boundary on |ρ1 + ρ2|:
/// sqrt(16π² − 1) / (2π) ≈ 1.994.
pub fn rho_sum_threshold() -> f64 {
    let pi = std::f64::consts::PI;
    (16.0 * pi * pi - 1.0).sqrt() / (2.0 * pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn predicted_delay_arithmetic() {
        // C = 0, K = 1, b = e gives e + 1/2.
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(predicted_delay(1.0, 0.0, e), e + 0.5, epsilon = 1e-14);
    }

    #[test]
    fn predicted_delay_is_increasing_in_b() {
        let mut last = predicted_delay(0.5, -1.0, 2.0);
        let mut b = 2.0;
        while b < 20.0 {
            b += 0.25;
            let next = predicted_delay(0.5, -1.0, b);
            assert!(next > last, "not increasing at b = {b}");
            last = next;
        }
    }

    #[test]
    fn ar1_condition_values() {
        // α = 0: v = 1, h = 1/sqrt(4π) ≈ 0.2821.
        let r = check_c2_ar1(0.0).unwrap();
        assert_abs_diff_eq!(r.stationary_var, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.h, 1.0 / (4.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-14);
        assert!((r.h - 0.2821).abs() < 5e-5);
        assert!(r.pass);

        // α = 0.5: v = 4/3.
        let r = check_c2_ar1(0.5).unwrap();
        assert_abs_diff_eq!(r.stationary_var, 4.0 / 3.0, epsilon = 1e-14);
        assert!(r.pass);

        assert!(check_c2_ar1(1.0).is_err());
    }

    #[test]
    fn equicorrelated_closed_form_and_threshold() {
        let r = h_equicorrelated_2d(0.0, 0.0);
        let h = r.h.unwrap();
        assert_abs_diff_eq!(h, 1.0 / (4.0 * std::f64::consts::PI), epsilon = 1e-14);
        assert!((h - 0.0796).abs() < 5e-5);

        // Degenerate boundary ρ1 + ρ2 = 2 reports violation, no panic.
        let r = h_equicorrelated_2d(1.0, 1.0);
        assert!(r.h.is_none());
        assert!(!r.pass);

        // Boundary value to three decimals.
        assert!((rho_sum_threshold() - 1.994).abs() < 5e-4);
    }

    #[test]
    fn general_check_agrees_with_equicorrelated_form() {
        let (rho1, rho2) = (0.3, -0.1);
        let s1 = DMatrix::from_row_slice(2, 2, &[1.0, rho1, rho1, 1.0]);
        let s2 = DMatrix::from_row_slice(2, 2, &[1.0, rho2, rho2, 1.0]);
        let h = DMatrix::identity(2, 2);
        let general = check_c2_linear_gaussian(&s1, &s2, &h).unwrap();
        let closed = h_equicorrelated_2d(rho1, rho2).h.unwrap();
        assert_abs_diff_eq!(general.a, closed, epsilon = 1e-12);
    }

    #[test]
    fn kl_requires_distinct_parameters() {
        let model = ModelSpec::iid_gaussian();
        assert!(estimate_kl(&model, 0.0, 0.0, 10, 10, 1).is_err());
    }

    #[test]
    fn negative_drift_is_an_error_for_ladders() {
        // Swapping θ and θ0 makes the walk drift down.
        let model = ModelSpec::iid_gaussian();
        let err = ladder_simulate(&model, 0.0, 1.0, 100, &[], 3);
        assert!(matches!(err, Err(Error::NonPositiveInformation { .. })));
    }

    #[test]
    fn constants_are_pure_functions_of_seed() {
        let model = ModelSpec::iid_gaussian();
        let a = estimate_kl(&model, 1.0, 0.0, 50, 100, 77).unwrap();
        let b = estimate_kl(&model, 1.0, 0.0, 50, 100, 77).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.se.to_bits(), b.se.to_bits());
    }
}
