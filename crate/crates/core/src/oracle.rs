//! Independent brute-force reference implementations used by the validation
//! suite to cross-check the fast paths.
//!
//! Nothing here reuses the recursive filtering or log-domain recursions being
//! checked: joint densities are assembled as full covariance matrices,
//! ratio sums are literal double loops, integrals go through adaptive
//! Simpson quadrature, and suprema come from grid search with local
//! refinement.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::numerics::{gauss_legendre, map_rule, LN_2PI};
use crate::ssm::GaussianSsm;

/// Multivariate normal log density via a Cholesky factor of the assembled
/// covariance.
pub fn mvn_logpdf(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let chol = Cholesky::new(cov.clone()).expect("oracle covariance must be PD");
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let resid = x - mean;
    let solved = chol.solve(&resid);
    -0.5 * (mean.len() as f64 * LN_2PI + log_det + resid.dot(&solved))
}

/// Stationary state covariance by direct series summation Σ F^k Σ1 (F^k)ᵀ,
/// independent of the fixed-point solver.
pub fn stationary_cov_series(f: &DMatrix<f64>, sigma1: &DMatrix<f64>) -> DMatrix<f64> {
    let mut term = sigma1.clone();
    let mut total = sigma1.clone();
    for _ in 0..10_000 {
        term = f * &term * f.transpose();
        let norm = term.norm();
        total += &term;
        if norm <= 1e-17 * total.norm().max(1.0) {
            break;
        }
    }
    total
}

/// Joint law of (Y_1, …, Y_n) for a materialized system started at its
/// stationary state law: mean stacks the observation offset, covariance
/// blocks are H F^{i−j} P∞ Hᵀ plus Σ2 on the diagonal.
pub fn joint_observation_law(model: &GaussianSsm, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let r = model.obs_dim();
    let p = model.state_dim();
    let p_inf = stationary_cov_series(model.transition(), model.state_cov());
    let h = model.observation();

    let mut mean = DVector::zeros(n * r);
    for i in 0..n {
        mean.rows_mut(i * r, r).copy_from(model.obs_offset());
    }

    // Powers of F applied to P∞ once, reused across blocks.
    let mut f_pows: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    f_pows.push(DMatrix::identity(p, p));
    for i in 1..n {
        f_pows.push(model.transition() * &f_pows[i - 1]);
    }

    let mut cov = DMatrix::zeros(n * r, n * r);
    for i in 0..n {
        for j in 0..=i {
            // Cov(Y_i, Y_j) for i ≥ j.
            let mut block = h * &f_pows[i - j] * &p_inf * h.transpose();
            if i == j {
                block += model.obs_cov();
            }
            cov.view_mut((i * r, j * r), (r, r)).copy_from(&block);
            if i != j {
                cov.view_mut((j * r, i * r), (r, r)).copy_from(&block.transpose());
            }
        }
    }
    (mean, cov)
}

/// Joint log density of a stacked observation sequence under the model.
pub fn joint_observation_logpdf(model: &GaussianSsm, ys: &[DVector<f64>]) -> f64 {
    let r = model.obs_dim();
    let n = ys.len();
    let (mean, cov) = joint_observation_law(model, n);
    let mut stacked = DVector::zeros(n * r);
    for (i, y) in ys.iter().enumerate() {
        stacked.rows_mut(i * r, r).copy_from(y);
    }
    mvn_logpdf(&mean, &cov, &stacked)
}

/// Literal double-loop evaluation of the ratio sum Σ_{k=1}^{n} Π_{l=k}^{n}
/// e^{g_l} (the zero-start statistic after n steps).
pub fn sr_double_sum(gs: &[f64]) -> f64 {
    let n = gs.len();
    let mut total = 0.0f64;
    for k in 0..n {
        let mut prod = 1.0f64;
        for g in &gs[k..] {
            prod *= g.exp();
        }
        total += prod;
    }
    total
}

/// Compensated (Kahan) summation.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, fa, m, fm, flm);
    let right = simpson(m, fm, b, fb, frm);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, fa, m, fm, flm, left, tol / 2.0, depth - 1)
        + adaptive_step(f, m, fm, b, fb, frm, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on [a, b] to absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, fa, b, fb, fm);
    adaptive_step(&f, a, fa, b, fb, fm, whole, tol, 48)
}

/// Quadrature evaluation of the uniform-prior mixture window in the log
/// domain: log ∫ over (lower, upper) of
/// exp{ Σ_l [ (e0_l − θ0)²/2σ0²_l − (e_l − θ − a_l)²/2σ²_l ] } dθ.
#[allow(clippy::too_many_arguments)]
pub fn log_mixture_quadrature(
    e: &[f64],
    offsets: &[f64],
    sigma_post: &[f64],
    e0: &[f64],
    sigma_null: &[f64],
    theta0: f64,
    lower: f64,
    upper: f64,
) -> f64 {
    let exponent = |theta: f64| -> f64 {
        let mut s = 0.0;
        for l in 0..e.len() {
            let d = e[l] - theta - offsets[l];
            let dn = e0[l] - theta0;
            s += dn * dn / (2.0 * sigma_null[l] * sigma_null[l])
                - d * d / (2.0 * sigma_post[l] * sigma_post[l]);
        }
        s
    };
    // Rescale by the grid maximum of the exponent so the integrand is O(1).
    let mut peak = f64::NEG_INFINITY;
    for i in 0..=400 {
        let t = lower + (upper - lower) * i as f64 / 400.0;
        peak = peak.max(exponent(t));
    }
    let integral = adaptive_simpson(
        |t| (exponent(t) - peak).exp(),
        lower,
        upper,
        1e-13 * (upper - lower).max(1.0),
    );
    peak + integral.ln()
}

fn normal2_logpdf(x: &[f64; 2], mean: &[f64; 2], cov: &[[f64; 2]; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let dx = [x[0] - mean[0], x[1] - mean[1]];
    let quad = (cov[1][1] * dx[0] * dx[0] - 2.0 * cov[0][1] * dx[0] * dx[1]
        + cov[0][0] * dx[1] * dx[1])
        / det;
    -0.5 * (2.0 * LN_2PI + det.ln() + quad)
}

/// Tensor Gauss-Legendre value of
/// ∫∫ N₂(x'; μ, Σ1) N₂(y; x', Σ2) dx' for μ = F x (the 2-d, H = I case).
#[allow(clippy::too_many_arguments)]
pub fn smoothed_density_2d(
    fx: &[f64; 2],
    y: &[f64; 2],
    sigma1: &[[f64; 2]; 2],
    sigma2: &[[f64; 2]; 2],
    nodes: &[f64],
    weights: &[f64],
) -> f64 {
    // Integration box wide enough for both Gaussian factors.
    let sd = sigma1[0][0].max(sigma1[1][1]).max(sigma2[0][0]).max(sigma2[1][1]).sqrt();
    let lo = [
        fx[0].min(y[0]) - 9.0 * sd,
        fx[1].min(y[1]) - 9.0 * sd,
    ];
    let hi = [
        fx[0].max(y[0]) + 9.0 * sd,
        fx[1].max(y[1]) + 9.0 * sd,
    ];
    let (n0, w0) = map_rule(nodes, weights, lo[0], hi[0]);
    let (n1, w1) = map_rule(nodes, weights, lo[1], hi[1]);
    let mut total = 0.0;
    for (x0, wa) in n0.iter().zip(&w0) {
        for (x1, wb) in n1.iter().zip(&w1) {
            let xp = [*x0, *x1];
            let v = (normal2_logpdf(&xp, fx, sigma1) + normal2_logpdf(y, &xp, sigma2)).exp();
            total += wa * wb * v;
        }
    }
    total
}

/// sup over x of the smoothed one-step density for the 2-d linear system
/// with H = I and diagonal F = diag(f1, f2): coarse grid then shrinking
/// refinement around the argmax.
pub fn h_sup_quadrature_2d(
    f_diag: &[f64; 2],
    sigma1: &[[f64; 2]; 2],
    sigma2: &[[f64; 2]; 2],
    y: &[f64; 2],
) -> f64 {
    let (nodes, weights) = gauss_legendre(60);
    let eval = |x: &[f64; 2]| {
        let fx = [f_diag[0] * x[0], f_diag[1] * x[1]];
        smoothed_density_2d(&fx, y, sigma1, sigma2, &nodes, &weights)
    };
    let mut best = [0.0f64; 2];
    let mut best_val = f64::NEG_INFINITY;
    let mut center = [0.0f64; 2];
    let mut step = 0.5f64;
    let mut halfspan = 4.0f64;
    for round in 0..4 {
        let counts = (2.0 * halfspan / step).round() as i64;
        for i in 0..=counts {
            for j in 0..=counts {
                let x = [
                    center[0] - halfspan + i as f64 * step,
                    center[1] - halfspan + j as f64 * step,
                ];
                let v = eval(&x);
                if v > best_val {
                    best_val = v;
                    best = x;
                }
            }
        }
        center = best;
        halfspan = step;
        step /= 5.0;
        let _ = round;
    }
    best_val
}

/// sup over x of ∫ N(z; αx, 1) N(z; 0, v) dz for the direct-observation
/// AR(1) check, by quadrature and grid refinement.
pub fn h_sup_quadrature_ar1(alpha: f64, stationary_var: f64) -> f64 {
    let integral = |x: f64| {
        let m = alpha * x;
        let sd = stationary_var.sqrt().max(1.0);
        adaptive_simpson(
            |z| {
                let a = (-0.5 * (z - m) * (z - m)).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let b = (-0.5 * z * z / stationary_var).exp()
                    / (2.0 * std::f64::consts::PI * stationary_var).sqrt();
                a * b
            },
            m.min(0.0) - 10.0 * sd,
            m.max(0.0) + 10.0 * sd,
            1e-13,
        )
    };
    let mut best_x = 0.0f64;
    let mut best = f64::NEG_INFINITY;
    let mut center = 0.0f64;
    let mut halfspan = 6.0f64;
    let mut step = 0.25f64;
    for _ in 0..4 {
        let counts = (2.0 * halfspan / step).round() as i64;
        for i in 0..=counts {
            let x = center - halfspan + i as f64 * step;
            let v = integral(x);
            if v > best {
                best = v;
                best_x = x;
            }
        }
        center = best_x;
        halfspan = step;
        step /= 5.0;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-10);
        let v = adaptive_simpson(|x: f64| (-x * x / 2.0).exp(), -8.0, 8.0, 1e-13);
        assert_abs_diff_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn mvn_logpdf_matches_scalar_formula() {
        let mean = DVector::from_element(1, 0.3);
        let cov = DMatrix::from_element(1, 1, 2.0);
        let x = DVector::from_element(1, 1.0);
        let expect = crate::numerics::norm_logpdf(1.0, 0.3, 2.0);
        assert_abs_diff_eq!(mvn_logpdf(&mean, &cov, &x), expect, epsilon = 1e-13);
    }

    #[test]
    fn series_covariance_matches_scalar_geometric_sum() {
        let f = DMatrix::from_element(1, 1, 0.5);
        let q = DMatrix::from_element(1, 1, 1.0);
        let p = stationary_cov_series(&f, &q);
        assert_abs_diff_eq!(p[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn double_sum_on_known_inputs() {
        // g = (ln 2, ln 1/2): Σ = e^{g1+g2} + e^{g2} = 1 + 1/2 = 3/2.
        let v = sr_double_sum(&[2.0f64.ln(), 0.5f64.ln()]);
        assert_abs_diff_eq!(v, 1.5, epsilon = 1e-13);
    }
}
