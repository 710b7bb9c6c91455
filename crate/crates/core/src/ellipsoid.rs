//! Ellipsoidal uncertainty sets `{μ : (μ−ν)ᵀΓ⁻¹(μ−ν) ≤ κ²}` and their
//! construction as χ² confidence regions around a filter state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::FilterState;
use crate::linalg;
use crate::stats::chi2_quantile;

/// Relative slack applied by [`Ellipsoid::contains`].
pub const BOUNDARY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub nu: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub kappa: f64,
    /// Lower-triangular factor, `Γ = ττᵀ`.
    pub tau: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn new(nu: DVector<f64>, gamma: DMatrix<f64>, kappa: f64) -> Result<Self> {
        let tau = linalg::cholesky_factor(&gamma)?;
        Self::with_factor(nu, gamma, kappa, tau)
    }

    /// Uses a caller-provided factor; any `τ` with `ττᵀ = Γ` describes the same set.
    pub fn with_factor(
        nu: DVector<f64>,
        gamma: DMatrix<f64>,
        kappa: f64,
        tau: DMatrix<f64>,
    ) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::OutOfDomain(format!(
                "radius kappa = {kappa} must be > 0"
            )));
        }
        let d = nu.len();
        if gamma.nrows() != d || gamma.ncols() != d || tau.nrows() != d || tau.ncols() != d {
            return Err(Error::OutOfDomain(
                "ellipsoid center and shape dimensions differ".into(),
            ));
        }
        let recon = &tau * tau.transpose();
        if (&recon - &gamma).amax() > 1e-10 * gamma.amax() {
            return Err(Error::FactorizationFailed(
                "tau tauᵀ does not reproduce Gamma".into(),
            ));
        }
        if tau.clone().try_inverse().is_none() {
            return Err(Error::FactorizationFailed("tau is singular".into()));
        }
        Ok(Ellipsoid {
            nu,
            gamma,
            kappa,
            tau,
        })
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    /// `‖τ⁻¹x‖` via a triangular solve.
    pub fn whitened_norm(&self, x: &DVector<f64>) -> f64 {
        match self.tau.solve_lower_triangular(x) {
            Some(y) => y.norm(),
            None => {
                let inv = self
                    .tau
                    .clone()
                    .try_inverse()
                    .expect("tau checked nonsingular");
                (inv * x).norm()
            }
        }
    }

    /// Normalized distance `‖τ⁻¹(μ−ν)‖ / κ`; equals 1 on the boundary.
    pub fn radius_ratio(&self, mu: &DVector<f64>) -> f64 {
        self.whitened_norm(&(mu - &self.nu)) / self.kappa
    }

    pub fn contains(&self, mu: &DVector<f64>) -> bool {
        self.whitened_norm(&(mu - &self.nu)) <= self.kappa * (1.0 + BOUNDARY_SLACK)
    }

    /// Boundary point `ν + κτu` for a unit direction `u`.
    pub fn boundary_point(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.nu + &self.tau * u * (self.kappa / u.norm())
    }
}

/// Radius `√χ²_{d,1−η}` of the `(1−η)` confidence region in `d` dimensions.
pub fn confidence_radius(d: usize, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::OutOfDomain(format!(
            "confidence parameter eta = {eta} not in (0, 1)"
        )));
    }
    Ok(chi2_quantile(d, 1.0 - eta)?.sqrt())
}

fn degeneracy(q: &DMatrix<f64>) -> (f64, f64) {
    (linalg::min_eigenvalue(q), q.trace())
}

/// Confidence ellipsoid `(ν, Γ, κ) = (m̂, q, √χ²_{d,1−η})`.
pub fn confidence_ellipsoid(state: &FilterState, eta: f64) -> Result<Ellipsoid> {
    let d = state.m_hat.len();
    let (smallest, trace) = degeneracy(&state.q);
    if !(smallest >= 1e-12 * trace / d as f64) || !(trace > 0.0) {
        return Err(Error::DegenerateCovariance { smallest, trace });
    }
    let kappa = confidence_radius(d, eta)?;
    Ellipsoid::new(state.m_hat.clone(), linalg::symmetrize(&state.q), kappa)
}

/// Same as [`confidence_ellipsoid`] but lifts a flat covariance by
/// `max(1e-10·tr(q)/d, 1e-14)·I` instead of failing.
pub fn confidence_ellipsoid_regularized(state: &FilterState, eta: f64) -> Result<Ellipsoid> {
    match confidence_ellipsoid(state, eta) {
        Err(Error::DegenerateCovariance { trace, .. }) => {
            let d = state.m_hat.len();
            let lift = (1e-10 * trace.max(0.0) / d as f64).max(1e-14);
            let q = linalg::symmetrize(&state.q) + DMatrix::identity(d, d) * lift;
            let kappa = confidence_radius(d, eta)?;
            Ellipsoid::new(state.m_hat.clone(), q, kappa)
        }
        other => other,
    }
}
