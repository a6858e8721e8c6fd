//! Stable log-domain primitives, Gauss-Legendre rules, and summary statistics.

/// ln(2π).
pub const LN_2PI: f64 = 1.837_877_066_409_345_6;

/// log(exp(a) + exp(b)) without overflow.
pub fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// log Σ exp(x_i) over a slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// log(1 + exp(t)), exact at both tails: softplus(-inf) = 0.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// One step of the Shiryayev-Roberts recursion in the log domain:
/// log R' = g - log q + log(1 + R). The exponentiated ratio is never formed.
pub fn log_sr_next(log_r: f64, g: f64, log_q: f64) -> f64 {
    g - log_q + softplus(log_r)
}

/// Log density of N(mean, var) at x.
pub fn norm_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * (LN_2PI + var.ln() + z * z / var)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// log P{Z > z} for standard normal Z, valid far into the upper tail.
///
/// Uses erfc directly up to z = 30 and the continued asymptotic expansion
/// beyond, where erfc itself underflows.
pub fn log_norm_sf(z: f64) -> f64 {
    if z <= 30.0 {
        (0.5 * libm::erfc(z / std::f64::consts::SQRT_2)).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - z.ln() - 0.5 * LN_2PI + series.ln()
    }
}

/// log(Φ(b) − Φ(a)) for a ≤ b, stable when both endpoints sit in one tail.
pub fn log_norm_cdf_diff(a: f64, b: f64) -> f64 {
    assert!(a <= b, "interval endpoints out of order");
    if a <= 0.0 && b >= 0.0 {
        // The interval straddles the mode; no cancellation possible.
        (norm_cdf(b) - norm_cdf(a)).ln()
    } else if a > 0.0 {
        // Upper tail: Φ(b) − Φ(a) = sf(a) − sf(b).
        let la = log_norm_sf(a);
        let lb = log_norm_sf(b);
        la + (-((lb - la).exp())).ln_1p()
    } else {
        log_norm_cdf_diff(-b, -a)
    }
}

fn legendre_value_deriv(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes (ascending) and weights of the n-point Gauss-Legendre rule on (−1, 1).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x =
            (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_value_deriv(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_value_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * d * d);
        // x is the i-th largest root; mirror it onto the low end.
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Affine map of a (−1, 1) rule onto (lo, hi).
pub fn map_rule(nodes: &[f64], weights: &[f64], lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let mid = 0.5 * (lo + hi);
    let halfwidth = 0.5 * (hi - lo);
    (
        nodes.iter().map(|x| mid + halfwidth * x).collect(),
        weights.iter().map(|w| halfwidth * w).collect(),
    )
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(!xs.is_empty() && !ys.is_empty());
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    assert!(n >= 1.0);
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least squares slope of y on x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn logsumexp_matches_naive_in_range() {
        let xs: [f64; 4] = [0.3, -1.2, 2.5, 0.0];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_abs_diff_eq!(logsumexp(&xs), naive, epsilon = 1e-14);
        assert_abs_diff_eq!(logsumexp2(0.3, 2.5), (0.3f64.exp() + 2.5f64.exp()).ln(), epsilon = 1e-14);
    }

    #[test]
    fn logsumexp_survives_extremes() {
        assert_abs_diff_eq!(logsumexp2(1000.0, 998.0), 1000.0 + (1.0f64 + (-2.0f64).exp()).ln(), epsilon = 1e-12);
        assert_eq!(logsumexp2(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert_abs_diff_eq!(logsumexp2(f64::NEG_INFINITY, 1.5), 1.5, epsilon = 0.0);
    }

    #[test]
    fn softplus_tails() {
        assert_eq!(softplus(f64::NEG_INFINITY), 0.0);
        assert_abs_diff_eq!(softplus(0.0), 2.0f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(softplus(50.0), 50.0 + (-50.0f64).exp().ln_1p(), epsilon = 1e-15);
    }

    #[test]
    fn gauss_legendre_low_orders() {
        let (n2, w2) = gauss_legendre(2);
        assert_abs_diff_eq!(n2[0], -(1.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(n2[1], (1.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(w2[0], 1.0, epsilon = 1e-14);

        let (n3, w3) = gauss_legendre(3);
        assert_abs_diff_eq!(n3[0], -(0.6f64).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(n3[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w3[1], 8.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w3[0], 5.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // A 33-point rule is exact through degree 65.
        let (nodes, weights) = gauss_legendre(33);
        let integral: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * (x.powi(10) + 3.0 * x.powi(7) + 1.0))
            .sum();
        // ∫_{-1}^{1} x^10 dx = 2/11, odd term vanishes, constant gives 2.
        assert_abs_diff_eq!(integral, 2.0 / 11.0 + 2.0, epsilon = 1e-13);
    }

    #[test]
    fn normal_tail_logs_agree_with_direct_values() {
        for z in [0.0, 0.5, 2.0] {
            let direct = (1.0 - norm_cdf(z)).ln();
            assert_abs_diff_eq!(log_norm_sf(z), direct, epsilon = 1e-12);
        }
        // Deep-tail reference values computed with quad-precision software.
        assert_abs_diff_eq!(log_norm_sf(5.0), -15.064998393988725, epsilon = 1e-11);
        assert_abs_diff_eq!(log_norm_sf(8.0), -35.013437159914560, epsilon = 1e-11);
        // Across the asymptotic switch the curve stays smooth.
        let a = log_norm_sf(29.999);
        let b = log_norm_sf(30.001);
        assert!((a - b).abs() < 0.1);
        assert!(log_norm_sf(60.0).is_finite());
    }

    #[test]
    fn cdf_diff_matches_direct_in_central_range() {
        let direct = (norm_cdf(1.2) - norm_cdf(0.4)).ln();
        assert_abs_diff_eq!(log_norm_cdf_diff(0.4, 1.2), direct, epsilon = 1e-12);
        let direct = (norm_cdf(0.7) - norm_cdf(-0.3)).ln();
        assert_abs_diff_eq!(log_norm_cdf_diff(-0.3, 0.7), direct, epsilon = 1e-12);
        let direct = (norm_cdf(-1.0) - norm_cdf(-2.0)).ln();
        assert_abs_diff_eq!(log_norm_cdf_diff(-2.0, -1.0), direct, epsilon = 1e-12);
        assert!(log_norm_cdf_diff(40.0, 41.0).is_finite());
    }

    #[test]
    fn ks_distance_detects_shift() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let ys: Vec<f64> = (0..100).map(|i| i as f64 / 100.0 + 0.5).collect();
        assert!(ks_distance(&xs, &xs) < 1e-12);
        assert!(ks_distance(&xs, &ys) > 0.45);
    }

    proptest! {
        #[test]
        fn logsumexp_dominates_max(xs in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
            let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let l = logsumexp(&xs);
            prop_assert!(l >= m - 1e-12);
            prop_assert!(l <= m + (xs.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn softplus_dominates_positive_part(t in -700.0f64..700.0) {
            let s = softplus(t);
            prop_assert!(s >= t.max(0.0));
            prop_assert!(s <= t.max(0.0) + 2.0f64.ln() + 1e-12);
        }
    }
}
