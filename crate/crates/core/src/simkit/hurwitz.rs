use nalgebra::{DMatrix, DVector};

use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurwitzReport {
    /// Largest real part over the spectrum.
    pub abscissa: f64,
    pub stable: bool,
}

/// Spectral abscissa of `a` and whether it is strictly negative.
pub fn hurwitz_check(a: &DMatrix<f64>) -> HurwitzReport {
    let abscissa = spectral_abscissa(a);
    HurwitzReport {
        abscissa,
        stable: abscissa < 0.0,
    }
}

pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    linalg::eigenvalues(a)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Lyapunov cross-check: solve `AᵀX + XA = −I` and return `X` when the
/// solution exists and is positive definite. By the Lyapunov theorem this
/// succeeds exactly when `a` is Hurwitz.
pub fn lyapunov_certificate(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let eye = DMatrix::identity(n, n);
    // vec(AᵀX + XA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X) for column-major vec.
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(eye.as_slice());
    let sol = op.lu().solve(&rhs)?;
    let mut x = DMatrix::from_column_slice(n, n, sol.as_slice());
    linalg::symmetrize(&mut x);
    if !x.iter().all(|v| v.is_finite()) || !linalg::is_positive_definite(&x) {
        return None;
    }
    let residual = &at * &x + &x * a + &eye;
    if residual.amax() > 1e-6 * (1.0 + x.amax()) {
        return None;
    }
    Some(x)
}
