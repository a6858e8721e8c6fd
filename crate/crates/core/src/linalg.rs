//! Dense linear-algebra helpers: stability checks, stationary covariances,
//! and PSD factorizations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Operator (spectral) norm: the largest singular value.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

/// Spectral radius: the largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Solve P = F P Fᵀ + Q by fixed-point iteration to relative tolerance 1e-12.
pub fn lyapunov_fixed_point(
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
    max_iters: u64,
) -> Result<DMatrix<f64>> {
    let mut p = q.clone();
    for _ in 0..max_iters {
        let next = f * &p * f.transpose() + q;
        let diff = (&next - &p).norm();
        let scale = next.norm().max(1.0);
        p = next;
        if diff <= 1e-12 * scale {
            return Ok(symmetrize(&p));
        }
    }
    Err(Error::LyapunovDiverged { iters: max_iters })
}

/// Factor L with Σ = L Lᵀ for a symmetric PSD matrix, tolerating zero (and
/// slightly negative, up to -1e-10 · trace) eigenvalues.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidModel("covariance must be square".into()));
    }
    if (m - m.transpose()).abs().max() > 1e-9 * (1.0 + m.abs().max()) {
        return Err(Error::InvalidModel("covariance must be symmetric".into()));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let scale = m.trace().abs().max(1.0);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-10 * scale {
            return Err(Error::InvalidModel(format!(
                "covariance has negative eigenvalue {v:.3e}"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let mut l = eig.eigenvectors;
    for (j, s) in vals.iter().enumerate() {
        for i in 0..n {
            l[(i, j)] *= s;
        }
    }
    Ok(l)
}

/// True when Cholesky succeeds.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    nalgebra::Cholesky::new(m.clone()).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn norms_on_diagonal_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.8]);
        assert_abs_diff_eq!(operator_norm(&a), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(spectral_radius(&a), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn spectral_radius_sees_complex_pairs() {
        // Rotation scaled by 0.9 has complex eigenvalues of modulus 0.9.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert_abs_diff_eq!(spectral_radius(&a), 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(operator_norm(&a), 0.9, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_scalar_closed_form() {
        let f = DMatrix::from_element(1, 1, 0.5);
        let q = DMatrix::from_element(1, 1, 1.0);
        let p = lyapunov_fixed_point(&f, &q, 100_000).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 4.0 / 3.0, epsilon = 1e-11);
    }

    #[test]
    fn psd_sqrt_roundtrips() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let l = psd_sqrt(&m).unwrap();
        let back = &l * l.transpose();
        assert!((back - &m).abs().max() < 1e-12);

        // Rank-deficient input is accepted.
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let l = psd_sqrt(&singular).unwrap();
        assert!((&l * l.transpose() - singular).abs().max() < 1e-12);

        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(psd_sqrt(&indefinite).is_err());
    }
}
