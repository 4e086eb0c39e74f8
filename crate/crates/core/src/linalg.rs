//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{domain, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigenvalues below this (relative to the largest) are treated as zero.
pub const PSD_CLIP_TOL: f64 = 1e-12;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Force exact Hermitian symmetry, averaging away rounding asymmetry.
pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * c(0.5)
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues are real.
pub fn hermitian_eigen(a: &CMatrix) -> SymmetricEigen<Complex64, Dyn> {
    SymmetricEigen::new(hermitize(a))
}

/// Hermitian PSD square root via eigendecomposition, clipping slightly
/// negative eigenvalues to zero.
pub fn psd_sqrt(a: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(domain("square root of a non-square matrix"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let eig = hermitian_eigen(a);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = -PSD_CLIP_TOL * scale.max(1.0);
    let mut roots = Vec::with_capacity(n);
    for &lambda in eig.eigenvalues.iter() {
        if lambda < floor {
            return Err(domain(format!(
                "matrix is not positive semidefinite (eigenvalue {lambda:.3e})"
            )));
        }
        roots.push(c(lambda.max(0.0).sqrt()));
    }
    let v = &eig.eigenvectors;
    let scaled = v * DMatrix::from_diagonal(&DVector::from_vec(roots));
    Ok(hermitize(&(scaled * v.adjoint())))
}

/// Cholesky factor of a Hermitian positive-definite matrix.
pub fn hpd_factor(a: CMatrix) -> Result<Cholesky<Complex64, Dyn>> {
    Cholesky::new(a).ok_or_else(|| domain("matrix is not Hermitian positive definite"))
}

/// Real quadratic form x^H A^{-1} x given a Cholesky factor of A.
pub fn inv_quad_form(chol: &Cholesky<Complex64, Dyn>, x: &CVector) -> f64 {
    // x^H A^{-1} x = ||L^{-1} x||^2
    let mut y = x.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut y);
    y.norm_squared()
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().iter().fold(0.0f64, |m, &s| m.max(s))
}

/// Relative Frobenius distance ||a - b|| / max(||b||, tiny).
pub fn rel_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// `sum_m w_m * lambda_m / (a * lambda_m + b)` over an eigenvalue list; the
/// trace kernel shared by the deterministic-equivalent equations.
pub(crate) fn weighted_resolvent_sum(eigs: &[f64], a: f64, b: f64) -> f64 {
    eigs.iter().map(|&l| l / (a * l + b)).sum()
}
