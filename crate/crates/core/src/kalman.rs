//! Exact one-step predictive likelihoods via the Kalman filter.
//!
//! The filter state is the one-step-ahead prediction; its mean excludes the
//! not-yet-seen input term, which is applied when the step's input arrives.
//! The covariance recursion is the literal prediction/update composition
//!
//! ```text
//! P' = F (P − P Hᵀ V⁻¹ H P) Fᵀ + Σ1,     V = H P Hᵀ + Σ2,
//! ```
//!
//! symmetrized after every step. Innovations are evaluated through a Cholesky
//! factor of V; no explicit inverse is ever formed.

use nalgebra::{Cholesky, DMatrix, DVector};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::numerics::LN_2PI;
use crate::ssm::GaussianSsm;

/// One-step-ahead prediction of the hidden state.
#[derive(Debug, Clone)]
pub struct KalmanState {
    pub pred_mean: DVector<f64>,
    pub pred_cov: DMatrix<f64>,
}

/// Innovation at one step: residual e, covariance V, and the log predictive
/// density of the observation.
#[derive(Debug, Clone)]
pub struct Innovation {
    pub residual: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_pred: f64,
}

/// Advance one step: innovate on (y, u), then predict.
pub fn kalman_step(
    model: &GaussianSsm,
    state: &KalmanState,
    y: &DVector<f64>,
    u: Option<&DVector<f64>>,
    step: u64,
) -> Result<(KalmanState, Innovation)> {
    let mut xhat = state.pred_mean.clone();
    if let (Some(g), Some(u)) = (model.input_matrix(), u) {
        xhat += g * u;
    }
    let mut e = y - model.observation() * &xhat - model.obs_offset();
    if let (Some(j), Some(u)) = (model.feedthrough(), u) {
        e -= j * u;
    }
    let v = symmetrize(
        &(model.observation() * &state.pred_cov * model.observation().transpose()
            + model.obs_cov()),
    );
    let chol = Cholesky::new(v.clone()).ok_or(Error::DegenerateObservationCov { step })?;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let solved = chol.solve(&e);
    let quad = e.dot(&solved);
    let log_pred = -0.5 * (model.obs_dim() as f64 * LN_2PI + log_det + quad);

    // Gain via the same factor: K = P Hᵀ V⁻¹.
    let a = &state.pred_cov * model.observation().transpose();
    let gain = chol.solve(&a.transpose()).transpose();
    let filt_mean = &xhat + &gain * &e;
    let filt_cov = &state.pred_cov - &gain * a.transpose();
    let next = KalmanState {
        pred_mean: model.transition() * filt_mean,
        pred_cov: symmetrize(
            &(model.transition() * filt_cov * model.transition().transpose() + model.state_cov()),
        ),
    };
    Ok((
        next,
        Innovation {
            residual: e,
            cov: v,
            log_pred,
        },
    ))
}

enum FilterState {
    Scalar { m: f64, p: f64 },
    General(KalmanState),
}

/// A running filter bound to one materialized parameter value.
///
/// Scalar systems run on a no-allocation fast path; the general path defers
/// to [`kalman_step`].
pub struct KalmanFilter {
    model: Arc<GaussianSsm>,
    inner: FilterState,
    step: u64,
}

impl Clone for KalmanFilter {
    fn clone(&self) -> Self {
        KalmanFilter {
            model: Arc::clone(&self.model),
            inner: match &self.inner {
                FilterState::Scalar { m, p } => FilterState::Scalar { m: *m, p: *p },
                FilterState::General(s) => FilterState::General(s.clone()),
            },
            step: self.step,
        }
    }
}

impl KalmanFilter {
    /// Filter initialized at the stationary law of its own parameter:
    /// predicted mean 0, predicted covariance F P∞ Fᵀ + Σ1.
    pub fn new(model: Arc<GaussianSsm>) -> Self {
        let inner = if let Some(s) = model.scalar() {
            FilterState::Scalar {
                m: 0.0,
                p: s.init_pred_var,
            }
        } else {
            FilterState::General(KalmanState {
                pred_mean: DVector::zeros(model.state_dim()),
                pred_cov: model.initial_pred_cov().clone(),
            })
        };
        KalmanFilter {
            model,
            inner,
            step: 0,
        }
    }

    pub fn with_state(model: Arc<GaussianSsm>, state: KalmanState) -> Self {
        let inner = if model.scalar().is_some() {
            FilterState::Scalar {
                m: state.pred_mean[0],
                p: state.pred_cov[(0, 0)],
            }
        } else {
            FilterState::General(state)
        };
        KalmanFilter {
            model,
            inner,
            step: 0,
        }
    }

    pub fn model(&self) -> &GaussianSsm {
        &self.model
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// Current one-step-ahead prediction, materialized.
    pub fn state(&self) -> KalmanState {
        match &self.inner {
            FilterState::Scalar { m, p } => KalmanState {
                pred_mean: DVector::from_element(1, *m),
                pred_cov: DMatrix::from_element(1, 1, *p),
            },
            FilterState::General(s) => s.clone(),
        }
    }

    /// Advance on one observation, returning only the log predictive density.
    pub fn step_logpred(&mut self, y: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<f64> {
        self.step += 1;
        match &mut self.inner {
            FilterState::Scalar { m, p } => {
                let s = self.model.scalar().expect("scalar state implies scalar model");
                let e = y[0] - s.h * *m - s.offset;
                let v = s.h * *p * s.h + s.r;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::DegenerateObservationCov { step: self.step });
                }
                let log_pred = -0.5 * (LN_2PI + v.ln() + e * e / v);
                let gain = *p * s.h / v;
                let fm = *m + gain * e;
                let fp = *p - gain * s.h * *p;
                *m = s.f * fm;
                *p = s.f * fp * s.f + s.q;
                Ok(log_pred)
            }
            FilterState::General(state) => {
                let (next, innov) = kalman_step(&self.model, state, y, u, self.step)?;
                *state = next;
                Ok(innov.log_pred)
            }
        }
    }

    /// Advance on one observation, returning the full innovation.
    pub fn step(&mut self, y: &DVector<f64>, u: Option<&DVector<f64>>) -> Result<Innovation> {
        let scalar_pre = match &self.inner {
            FilterState::Scalar { m, p } => Some((*m, *p)),
            FilterState::General(_) => None,
        };
        if let Some((m, p)) = scalar_pre {
            let s = *self.model.scalar().expect("scalar state implies scalar model");
            let e = y[0] - s.h * m - s.offset;
            let v = s.h * p * s.h + s.r;
            let log_pred = self.step_logpred(y, u)?;
            return Ok(Innovation {
                residual: DVector::from_element(1, e),
                cov: DMatrix::from_element(1, 1, v),
                log_pred,
            });
        }
        self.step += 1;
        let step = self.step;
        let FilterState::General(state) = &mut self.inner else {
            unreachable!()
        };
        let (next, innov) = kalman_step(&self.model, state, y, u, step)?;
        *state = next;
        Ok(innov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::ModelSpec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degenerate_iid_reduction() {
        // F = 0, Σ1 = 0, H = 1, Σ2 = 1, prediction pinned at zero:
        // e = y, V = 1, ℓ = −y²/2 − ln(2π)/2.
        let model = Arc::new(ModelSpec::iid_gaussian().at(0.0).unwrap());
        let mut filter = KalmanFilter::new(model);
        let y = DVector::from_element(1, 0.37);
        let innov = filter.step(&y, None).unwrap();
        assert_abs_diff_eq!(innov.residual[0], 0.37, epsilon = 0.0);
        assert_abs_diff_eq!(innov.cov[(0, 0)], 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(innov.log_pred, -0.5 * 0.37f64 * 0.37 - 0.5 * LN_2PI, epsilon = 1e-15);
    }

    #[test]
    fn riccati_fixed_point_scalar_level_model() {
        // α = 0.5, both noise variances 1: the prediction variance solves
        // P² − 0.25 P − 1 = 0, giving P* = (0.25 + √4.0625)/2 ≈ 1.132782,
        // and V* = P* + 1.
        let model = Arc::new(
            ModelSpec::scalar_linear_gaussian(0.5, 1.0, 1.0)
                .unwrap()
                .at(0.0)
                .unwrap(),
        );
        let mut filter = KalmanFilter::new(model);
        let y = DVector::from_element(1, 0.1);
        let mut v_last = 0.0;
        for _ in 0..200 {
            let innov = filter.step(&y, None).unwrap();
            v_last = innov.cov[(0, 0)];
        }
        let p_star = (0.25 + 4.0625f64.sqrt()) / 2.0;
        let p_pred = filter.state().pred_cov[(0, 0)];
        assert_abs_diff_eq!(p_pred, p_star, epsilon = 1e-9);
        assert_abs_diff_eq!(v_last, p_star + 1.0, epsilon = 1e-9);
    }

    #[test]
    fn scalar_and_general_paths_agree() {
        // Force the general path through a 1×1 model with an input channel.
        let spec = ModelSpec::scalar_linear_gaussian(0.4, 0.8, 1.3).unwrap();
        let ssm = Arc::new(spec.at(0.2).unwrap());
        let mut fast = KalmanFilter::new(Arc::clone(&ssm));
        let mut slow_state = KalmanState {
            pred_mean: DVector::zeros(1),
            pred_cov: ssm.initial_pred_cov().clone(),
        };
        let ys = [0.3, -0.8, 1.1, 0.0, 2.4];
        for (k, &yv) in ys.iter().enumerate() {
            let y = DVector::from_element(1, yv);
            let fast_lp = fast.step_logpred(&y, None).unwrap();
            let (next, innov) = kalman_step(&ssm, &slow_state, &y, None, k as u64 + 1).unwrap();
            slow_state = next;
            assert_abs_diff_eq!(fast_lp, innov.log_pred, epsilon = 1e-12);
        }
        let s = fast.state();
        assert_abs_diff_eq!(s.pred_mean[0], slow_state.pred_mean[0], epsilon = 1e-12);
        assert_abs_diff_eq!(s.pred_cov[(0, 0)], slow_state.pred_cov[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn ar_observation_noise_free_filter_stays_positive() {
        // Direct observation of an AR(2): V bottoms out at the innovation
        // variance and the filter never degenerates.
        let spec = ModelSpec::ar_mean_shift(vec![0.4, 0.3], 0.9).unwrap();
        let ssm = Arc::new(spec.at(0.5).unwrap());
        let mut filter = KalmanFilter::new(ssm);
        for k in 0..50 {
            let y = DVector::from_element(1, (k as f64 * 0.37).sin());
            let innov = filter.step(&y, None).unwrap();
            assert!(innov.cov[(0, 0)] >= 0.9 - 1e-9 || filter.step_index() <= 2);
        }
    }
}
