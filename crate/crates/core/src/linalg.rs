//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= tol * scale
}

/// Eigenvalues of the symmetrized matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Lower-triangular factor `L` with `L Lᵀ = m`.
pub fn cholesky_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m))
        .map(|c| c.l())
        .ok_or_else(|| Error::FactorizationFailed("matrix is not positive definite".into()))
}

/// Symmetric square root of a PSD matrix; negative round-off eigenvalues are clipped.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Returns the nearest PSD matrix (eigenvalue clipping) and the most negative
/// eigenvalue found before clipping.
pub fn project_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym.clone());
    let lowest = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if lowest >= 0.0 {
        return (sym, lowest);
    }
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (symmetrize(&out), lowest)
}

/// Solves `a x + x aᵀ = rhs` through the Kronecker-vectorized linear system.
pub fn solve_lyapunov(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    // column-major vec: vec(a x) = (I ⊗ a) vec(x), vec(x aᵀ) = (a ⊗ I) vec(x)
    let big = eye.kronecker(a) + a.kronecker(&eye);
    let b = DVector::from_column_slice(rhs.as_slice());
    let sol = big
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::FactorizationFailed("Lyapunov operator is singular".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(
        d,
        d,
        sol.as_slice(),
    )))
}

pub fn ones(d: usize) -> DVector<f64> {
    DVector::from_element(d, 1.0)
}

pub fn unit(d: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[i] = 1.0;
    e
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
