//! State space model families and trajectory simulation with a change point.
//!
//! All three families materialize to the same concrete linear-Gaussian system
//! [`GaussianSsm`]: the i.i.d. family pins its state at zero, and the
//! autoregressive mean-shift family is written in centered companion form
//! with the mean carried as an observation offset. One Kalman/particle code
//! path then serves every family.
//!
//! Observation timing: for k ≥ 1,
//!
//! ```text
//! X_k = F X_{k-1} + G u_k + δ_k,    Y_k = H X_k + J u_k + c + ε_k,
//! ```
//!
//! with X_0 drawn from the stationary law of the pre-change parameter. The
//! change time ω indexes the first post-change observation, so Y_ω is the
//! first sample generated under the true post-change parameter.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{lyapunov_fixed_point, operator_norm, psd_sqrt, spectral_radius, symmetrize};
use crate::rng::{rng_from_path, LANE_TRAJECTORY};

/// Iteration cap for the stationary-covariance fixed point.
pub const LYAPUNOV_MAX_ITERS: u64 = 100_000;

/// Index of the first post-change observation, or no change at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ChangeTime {
    At(u64),
    Never,
}

impl ChangeTime {
    pub fn is_finite(&self) -> bool {
        matches!(self, ChangeTime::At(_))
    }
}

/// Which scalar coordinate the unknown parameter binds to in a
/// linear-Gaussian family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ParamBinding {
    /// Observation mean offset (requires a scalar observation).
    Mean,
    /// Entry (row, col) of the observation matrix H.
    HEntry { row: usize, col: usize },
    /// Entry (row, col) of the transition matrix F.
    FEntry { row: usize, col: usize },
}

/// A simulatable and filterable model family with one free scalar parameter.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    /// General linear-Gaussian system. `F`, `Σ1`, `Σ2` must satisfy the
    /// stability and covariance invariants; the free parameter θ binds to the
    /// coordinate named by `binding`, with every other coordinate treated as
    /// a known nuisance.
    LinearGaussian {
        f: DMatrix<f64>,
        g: Option<DMatrix<f64>>,
        h: DMatrix<f64>,
        j: Option<DMatrix<f64>>,
        sigma1: DMatrix<f64>,
        sigma2: DMatrix<f64>,
        inputs: Option<Arc<Vec<DVector<f64>>>>,
        binding: ParamBinding,
    },
    /// Stable autoregression observed directly; θ is the process mean:
    /// X_n = Σ a_k X_{n-k} + v_n + (1 − Σ a_k) θ.
    ArMeanShift { coeffs: Vec<f64>, noise_var: f64 },
    /// Y_k i.i.d. N(θ, 1); a degenerate system with trivial state.
    IidGaussian,
}

impl ModelSpec {
    pub fn iid_gaussian() -> Self {
        ModelSpec::IidGaussian
    }

    pub fn ar_mean_shift(coeffs: Vec<f64>, noise_var: f64) -> Result<Self> {
        let spec = ModelSpec::ArMeanShift { coeffs, noise_var };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear_gaussian(
        f: DMatrix<f64>,
        h: DMatrix<f64>,
        sigma1: DMatrix<f64>,
        sigma2: DMatrix<f64>,
        binding: ParamBinding,
    ) -> Result<Self> {
        let spec = ModelSpec::LinearGaussian {
            f,
            g: None,
            h,
            j: None,
            sigma1,
            sigma2,
            inputs: None,
            binding,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Scalar level-monitoring system: Y = X + θ + ε with an AR(1) latent
    /// level, the mean as the free parameter.
    pub fn scalar_linear_gaussian(
        alpha: f64,
        state_noise_var: f64,
        obs_noise_var: f64,
    ) -> Result<Self> {
        ModelSpec::linear_gaussian(
            DMatrix::from_element(1, 1, alpha),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, state_noise_var),
            DMatrix::from_element(1, 1, obs_noise_var),
            ParamBinding::Mean,
        )
    }

    /// State and observation dimensions (p, r).
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ModelSpec::LinearGaussian { f, h, .. } => (f.nrows(), h.nrows()),
            ModelSpec::ArMeanShift { coeffs, .. } => (coeffs.len().max(1), 1),
            ModelSpec::IidGaussian => (1, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::IidGaussian => Ok(()),
            ModelSpec::ArMeanShift { coeffs, noise_var } => {
                if coeffs.is_empty() {
                    return Err(Error::InvalidModel("autoregression needs order ≥ 1".into()));
                }
                if !(*noise_var > 0.0) {
                    return Err(Error::InvalidModel("noise variance must be positive".into()));
                }
                let comp = companion(coeffs);
                let rad = spectral_radius(&comp);
                if rad >= 1.0 {
                    return Err(Error::InvalidModel(format!(
                        "companion spectral radius {rad:.6} is not < 1"
                    )));
                }
                Ok(())
            }
            ModelSpec::LinearGaussian {
                f,
                g,
                h,
                j,
                sigma1,
                sigma2,
                binding,
                ..
            } => {
                let p = f.nrows();
                let r = h.nrows();
                if f.ncols() != p {
                    return Err(Error::InvalidModel("F must be square".into()));
                }
                if h.ncols() != p {
                    return Err(Error::InvalidModel("H must be r×p".into()));
                }
                if sigma1.nrows() != p || sigma1.ncols() != p {
                    return Err(Error::InvalidModel("Σ1 must be p×p".into()));
                }
                if sigma2.nrows() != r || sigma2.ncols() != r {
                    return Err(Error::InvalidModel("Σ2 must be r×r".into()));
                }
                if let (Some(g), Some(j)) = (g, j) {
                    if g.ncols() != j.ncols() {
                        return Err(Error::InvalidModel("G and J disagree on input size".into()));
                    }
                }
                if let Some(g) = g {
                    if g.nrows() != p {
                        return Err(Error::InvalidModel("G must have p rows".into()));
                    }
                }
                if let Some(j) = j {
                    if j.nrows() != r {
                        return Err(Error::InvalidModel("J must have r rows".into()));
                    }
                }
                let norm = operator_norm(f);
                if norm >= 1.0 {
                    return Err(Error::InvalidModel(format!(
                        "operator norm of F is {norm:.6}, not < 1"
                    )));
                }
                psd_sqrt(sigma1)?;
                if !crate::linalg::is_positive_definite(sigma2) {
                    return Err(Error::InvalidModel(
                        "Σ2 must be symmetric positive definite".into(),
                    ));
                }
                match binding {
                    ParamBinding::Mean if r != 1 => Err(Error::InvalidModel(
                        "mean binding requires a scalar observation".into(),
                    )),
                    ParamBinding::HEntry { row, col } if *row >= r || *col >= p => Err(
                        Error::InvalidModel("H binding indices out of range".into()),
                    ),
                    ParamBinding::FEntry { row, col } if *row >= p || *col >= p => Err(
                        Error::InvalidModel("F binding indices out of range".into()),
                    ),
                    _ => Ok(()),
                }
            }
        }
    }

    /// Materialize the family at parameter value θ.
    pub fn at(&self, theta: f64) -> Result<GaussianSsm> {
        self.validate()?;
        match self {
            ModelSpec::IidGaussian => GaussianSsm::new(
                DMatrix::from_element(1, 1, 0.0),
                None,
                DMatrix::from_element(1, 1, 1.0),
                None,
                DVector::from_element(1, theta),
                DMatrix::from_element(1, 1, 0.0),
                DMatrix::from_element(1, 1, 1.0),
                None,
            ),
            ModelSpec::ArMeanShift { coeffs, noise_var } => {
                let p = coeffs.len();
                let f = companion(coeffs);
                let mut sigma1 = DMatrix::zeros(p, p);
                sigma1[(0, 0)] = *noise_var;
                let mut h = DMatrix::zeros(1, p);
                h[(0, 0)] = 1.0;
                GaussianSsm::new(
                    f,
                    None,
                    h,
                    None,
                    DVector::from_element(1, theta),
                    sigma1,
                    DMatrix::from_element(1, 1, 0.0),
                    None,
                )
            }
            ModelSpec::LinearGaussian {
                f,
                g,
                h,
                j,
                sigma1,
                sigma2,
                inputs,
                binding,
            } => {
                let mut f = f.clone();
                let mut h = h.clone();
                let mut offset = DVector::zeros(h.nrows());
                match *binding {
                    ParamBinding::Mean => offset[0] = theta,
                    ParamBinding::HEntry { row, col } => h[(row, col)] = theta,
                    ParamBinding::FEntry { row, col } => {
                        f[(row, col)] = theta;
                        let norm = operator_norm(&f);
                        if norm >= 1.0 {
                            return Err(Error::InvalidModel(format!(
                                "binding θ = {theta} makes ‖F‖ = {norm:.6} ≥ 1"
                            )));
                        }
                    }
                }
                GaussianSsm::new(
                    f,
                    g.clone(),
                    h,
                    j.clone(),
                    offset,
                    sigma1.clone(),
                    sigma2.clone(),
                    inputs.clone(),
                )
            }
        }
    }
}

fn companion(coeffs: &[f64]) -> DMatrix<f64> {
    let p = coeffs.len();
    let mut m = DMatrix::zeros(p, p);
    for (k, a) in coeffs.iter().enumerate() {
        m[(0, k)] = *a;
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m
}

/// Scalar mirror of a 1×1 system, kept for allocation-free hot loops.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scalar1 {
    pub f: f64,
    pub h: f64,
    pub q: f64,
    pub r: f64,
    pub offset: f64,
    pub q_sd: f64,
    pub r_sd: f64,
    pub init_pred_var: f64,
}

/// A concrete linear-Gaussian system with every parameter bound.
#[derive(Debug, Clone)]
pub struct GaussianSsm {
    f: DMatrix<f64>,
    g: Option<DMatrix<f64>>,
    h: DMatrix<f64>,
    j: Option<DMatrix<f64>>,
    obs_offset: DVector<f64>,
    sigma1: DMatrix<f64>,
    sigma2: DMatrix<f64>,
    inputs: Option<Arc<Vec<DVector<f64>>>>,
    state_chol: DMatrix<f64>,
    obs_chol: DMatrix<f64>,
    stationary_cov: DMatrix<f64>,
    stationary_chol: DMatrix<f64>,
    init_pred_cov: DMatrix<f64>,
    scalar: Option<Scalar1>,
}

impl GaussianSsm {
    #[allow(clippy::too_many_arguments)]
    fn new(
        f: DMatrix<f64>,
        g: Option<DMatrix<f64>>,
        h: DMatrix<f64>,
        j: Option<DMatrix<f64>>,
        obs_offset: DVector<f64>,
        sigma1: DMatrix<f64>,
        sigma2: DMatrix<f64>,
        inputs: Option<Arc<Vec<DVector<f64>>>>,
    ) -> Result<Self> {
        let stationary_cov = lyapunov_fixed_point(&f, &sigma1, LYAPUNOV_MAX_ITERS)?;
        let state_chol = psd_sqrt(&sigma1)?;
        let obs_chol = psd_sqrt(&sigma2)?;
        let stationary_chol = psd_sqrt(&stationary_cov)?;
        let init_pred_cov = symmetrize(&(&f * &stationary_cov * f.transpose() + &sigma1));
        let scalar = if f.nrows() == 1 && h.nrows() == 1 && g.is_none() && j.is_none() {
            Some(Scalar1 {
                f: f[(0, 0)],
                h: h[(0, 0)],
                q: sigma1[(0, 0)],
                r: sigma2[(0, 0)],
                offset: obs_offset[0],
                q_sd: state_chol[(0, 0)],
                r_sd: obs_chol[(0, 0)],
                init_pred_var: init_pred_cov[(0, 0)],
            })
        } else {
            None
        };
        Ok(GaussianSsm {
            f,
            g,
            h,
            j,
            obs_offset,
            sigma1,
            sigma2,
            inputs,
            state_chol,
            obs_chol,
            stationary_cov,
            stationary_chol,
            init_pred_cov,
            scalar,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn observation(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn input_matrix(&self) -> Option<&DMatrix<f64>> {
        self.g.as_ref()
    }

    pub fn feedthrough(&self) -> Option<&DMatrix<f64>> {
        self.j.as_ref()
    }

    pub fn obs_offset(&self) -> &DVector<f64> {
        &self.obs_offset
    }

    pub fn state_cov(&self) -> &DMatrix<f64> {
        &self.sigma1
    }

    pub fn obs_cov(&self) -> &DMatrix<f64> {
        &self.sigma2
    }

    pub fn state_noise_chol(&self) -> &DMatrix<f64> {
        &self.state_chol
    }

    /// Stationary covariance of the state under this parameter.
    pub fn stationary_cov(&self) -> &DMatrix<f64> {
        &self.stationary_cov
    }

    /// Covariance of the one-step prediction started from stationarity,
    /// F P∞ Fᵀ + Σ1.
    pub fn initial_pred_cov(&self) -> &DMatrix<f64> {
        &self.init_pred_cov
    }

    pub(crate) fn scalar(&self) -> Option<&Scalar1> {
        self.scalar.as_ref()
    }

    /// Input vector attached to step k (1-based), if any.
    pub fn input_at(&self, k: u64) -> Option<&DVector<f64>> {
        self.inputs
            .as_ref()
            .and_then(|u| u.get((k as usize).checked_sub(1)?))
    }

    /// Exact draw from the stationary state law.
    pub fn stationary_draw(&self, rng: &mut ChaCha12Rng) -> DVector<f64> {
        let p = self.state_dim();
        let z = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
        &self.stationary_chol * z
    }
}

/// Pre-change parameter, true post-change parameter, and change time.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ChangeScenario {
    pub theta0: f64,
    pub theta_true: f64,
    pub omega: ChangeTime,
}

impl ChangeScenario {
    pub fn new(theta0: f64, theta_true: f64, omega: ChangeTime) -> Result<Self> {
        if let ChangeTime::At(k) = omega {
            if k < 1 {
                return Err(Error::InvalidConfig("change time must be ≥ 1".into()));
            }
            if theta_true == theta0 {
                return Err(Error::InvalidConfig(
                    "a finite change time requires θ ≠ θ0".into(),
                ));
            }
        }
        Ok(ChangeScenario {
            theta0,
            theta_true,
            omega,
        })
    }

    /// The no-change scenario (ω = ∞).
    pub fn no_change(theta0: f64) -> Self {
        ChangeScenario {
            theta0,
            theta_true: theta0,
            omega: ChangeTime::Never,
        }
    }
}

/// Streaming simulator: produces Y_1, Y_2, … one at a time.
///
/// Exactly p + r standard normal draws are consumed per step (plus p for
/// X_0), independent of noise rank, so runs that differ only in parameter
/// values stay aligned draw-for-draw under a common seed.
pub struct ObservationStream {
    pre: Arc<GaussianSsm>,
    post: Arc<GaussianSsm>,
    omega: ChangeTime,
    state: DVector<f64>,
    obs_buf: DVector<f64>,
    noise_p: DVector<f64>,
    noise_r: DVector<f64>,
    k: u64,
    rng: ChaCha12Rng,
}

impl ObservationStream {
    pub fn new(model: &ModelSpec, scenario: &ChangeScenario, seed: u64) -> Result<Self> {
        let pre = Arc::new(model.at(scenario.theta0)?);
        let post = if scenario.omega.is_finite() {
            Arc::new(model.at(scenario.theta_true)?)
        } else {
            pre.clone()
        };
        Ok(Self::from_parts(
            pre,
            post,
            scenario.omega,
            rng_from_path(seed, &[LANE_TRAJECTORY]),
        ))
    }

    pub(crate) fn from_parts(
        pre: Arc<GaussianSsm>,
        post: Arc<GaussianSsm>,
        omega: ChangeTime,
        mut rng: ChaCha12Rng,
    ) -> Self {
        let p = pre.state_dim();
        let r = pre.obs_dim();
        let state = pre.stationary_draw(&mut rng);
        ObservationStream {
            obs_buf: DVector::zeros(r),
            noise_p: DVector::zeros(p),
            noise_r: DVector::zeros(r),
            pre,
            post,
            omega,
            state,
            k: 0,
            rng,
        }
    }

    fn regime(&self, k: u64) -> &GaussianSsm {
        match self.omega {
            ChangeTime::At(w) if k >= w => &self.post,
            _ => &self.pre,
        }
    }

    /// Index of the most recently produced observation (0 before any).
    pub fn step_index(&self) -> u64 {
        self.k
    }

    /// Hidden state after the most recent step.
    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    /// Input attached to the most recent step, if the model carries inputs.
    pub fn current_input(&self) -> Option<&DVector<f64>> {
        self.regime(self.k).input_at(self.k)
    }

    /// Advance one step and return Y_k.
    pub fn next_observation(&mut self) -> &DVector<f64> {
        self.k += 1;
        let k = self.k;
        let post = matches!(self.omega, ChangeTime::At(w) if k >= w);
        let model = if post {
            Arc::clone(&self.post)
        } else {
            Arc::clone(&self.pre)
        };

        if let Some(s) = model.scalar() {
            let zx: f64 = self.rng.sample(StandardNormal);
            let zy: f64 = self.rng.sample(StandardNormal);
            let x = s.f * self.state[0] + s.q_sd * zx;
            self.state[0] = x;
            self.obs_buf[0] = s.h * x + s.offset + s.r_sd * zy;
            return &self.obs_buf;
        }

        for z in self.noise_p.iter_mut() {
            *z = self.rng.sample(StandardNormal);
        }
        for z in self.noise_r.iter_mut() {
            *z = self.rng.sample(StandardNormal);
        }
        let mut next = model.transition() * &self.state;
        if let (Some(g), Some(u)) = (model.input_matrix(), model.input_at(k)) {
            next += g * u;
        }
        next += model.state_noise_chol() * &self.noise_p;
        self.state = next;

        let mut y = model.observation() * &self.state + model.obs_offset();
        if let (Some(j), Some(u)) = (model.feedthrough(), model.input_at(k)) {
            y += j * u;
        }
        y += &model.obs_chol * &self.noise_r;
        self.obs_buf = y;
        &self.obs_buf
    }
}

/// A fully materialized simulated path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Hidden states X_0..X_n.
    pub states: Vec<DVector<f64>>,
    /// Observations Y_1..Y_n.
    pub observations: Vec<DVector<f64>>,
    pub scenario: ChangeScenario,
    pub seed: u64,
}

impl Trajectory {
    /// True when observation k (1-based) was generated post-change.
    pub fn is_post_change(&self, k: u64) -> bool {
        matches!(self.scenario.omega, ChangeTime::At(w) if k >= w)
    }
}

/// Simulate n observations with a change at the scenario's ω.
///
/// Identical (model, scenario, n, seed) always reproduces bit-identical
/// output.
pub fn simulate_trajectory(
    model: &ModelSpec,
    scenario: &ChangeScenario,
    n: u64,
    seed: u64,
) -> Result<Trajectory> {
    if n < 1 {
        return Err(Error::InvalidConfig("trajectory length must be ≥ 1".into()));
    }
    let mut stream = ObservationStream::new(model, scenario, seed)?;
    let mut states = Vec::with_capacity(n as usize + 1);
    let mut observations = Vec::with_capacity(n as usize);
    states.push(stream.state().clone());
    for _ in 0..n {
        let y = stream.next_observation().clone();
        observations.push(y);
        states.push(stream.state().clone());
    }
    Ok(Trajectory {
        states,
        observations,
        scenario: scenario.clone(),
        seed,
    })
}

/// Exact draw from the stationary state law of `model` at θ.
pub fn stationary_draw(model: &ModelSpec, theta: f64, seed: u64) -> Result<DVector<f64>> {
    let ssm = model.at(theta)?;
    let mut rng = rng_from_path(seed, &[LANE_TRAJECTORY]);
    Ok(ssm.stationary_draw(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn invalid_models_are_rejected() {
        assert!(ModelSpec::ar_mean_shift(vec![1.01], 1.0).is_err());
        assert!(ModelSpec::ar_mean_shift(vec![0.5], 0.0).is_err());
        assert!(ModelSpec::scalar_linear_gaussian(1.0, 1.0, 1.0).is_err());
        // Σ2 must be positive definite.
        assert!(ModelSpec::linear_gaussian(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.0),
            ParamBinding::HEntry { row: 0, col: 0 },
        )
        .is_err());
    }

    #[test]
    fn f_binding_is_stability_checked_at_materialization() {
        let spec = ModelSpec::linear_gaussian(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            ParamBinding::FEntry { row: 0, col: 0 },
        )
        .unwrap();
        assert!(spec.at(0.9).is_ok());
        assert!(spec.at(1.1).is_err());
    }

    #[test]
    fn ar2_companion_stationarity() {
        // X_n = 0.5 X_{n-1} + 0.2 X_{n-2} + v_n is stable.
        let spec = ModelSpec::ar_mean_shift(vec![0.5, 0.2], 1.0).unwrap();
        let ssm = spec.at(0.0).unwrap();
        // Stationary covariance solves the Lyapunov equation.
        let p = ssm.stationary_cov();
        let back = ssm.transition() * p * ssm.transition().transpose() + ssm.state_cov();
        assert!((p - back).abs().max() < 1e-9);
    }

    #[test]
    fn iid_model_has_unit_observation_variance_and_pinned_state() {
        let ssm = ModelSpec::iid_gaussian().at(0.7).unwrap();
        assert_abs_diff_eq!(ssm.stationary_cov()[(0, 0)], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(ssm.obs_cov()[(0, 0)], 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(ssm.obs_offset()[0], 0.7, epsilon = 0.0);
    }

    #[test]
    fn scenario_validation() {
        assert!(ChangeScenario::new(0.0, 1.0, ChangeTime::At(1)).is_ok());
        assert!(ChangeScenario::new(0.0, 0.0, ChangeTime::At(1)).is_err());
        assert!(ChangeScenario::new(0.0, 1.0, ChangeTime::At(0)).is_err());
        assert!(ChangeScenario::new(0.0, 0.0, ChangeTime::Never).is_ok());
    }

    #[test]
    fn simulate_is_reproducible() {
        let model = ModelSpec::scalar_linear_gaussian(0.5, 1.0, 1.0).unwrap();
        let sc = ChangeScenario::new(0.0, 1.0, ChangeTime::At(3)).unwrap();
        let a = simulate_trajectory(&model, &sc, 20, 42).unwrap();
        let b = simulate_trajectory(&model, &sc, 20, 42).unwrap();
        for (x, y) in a.observations.iter().zip(&b.observations) {
            assert_eq!(x[0].to_bits(), y[0].to_bits());
        }
        let c = simulate_trajectory(&model, &sc, 20, 43).unwrap();
        assert_ne!(a.observations[0][0].to_bits(), c.observations[0][0].to_bits());
    }

    #[test]
    fn regime_labels_follow_omega() {
        let model = ModelSpec::iid_gaussian();
        let sc = ChangeScenario::new(0.0, 1.0, ChangeTime::At(4)).unwrap();
        let t = simulate_trajectory(&model, &sc, 6, 1).unwrap();
        assert!(!t.is_post_change(3));
        assert!(t.is_post_change(4));
    }
}
