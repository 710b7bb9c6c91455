//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use robustdrift_core::*;

fn m2(a: [f64; 4]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &a)
}

/// Two-asset market with the reference volatility, γ = 0.5, fully invested.
pub fn reference_market() -> ValidatedMarket {
    validate_market(MarketParams {
        d: 2,
        m: 2,
        r: 0.0,
        sigma: m2([0.10, 0.05, 0.05, 0.10]),
        gamma: 0.5,
        h: 1.0,
        horizon: 1.0,
        x0: 1.0,
    })
    .expect("reference market")
}

pub fn reference_model() -> ValidatedDriftModel {
    let sigma = m2([0.10, 0.05, 0.05, 0.10]);
    validate_drift_model(DriftModelParams {
        alpha: m2([3.0, 0.0, 0.0, 2.0]),
        beta: m2([0.5, 0.25, 0.25, 0.5]),
        delta: DVector::from_column_slice(&[0.02, 0.03]),
        m0: DVector::from_column_slice(&[0.02, 0.03]),
        sigma0: m2([0.01, 0.0, 0.0, 0.01]),
        sigma_r: sigma.clone(),
        expert_cov: &sigma * sigma.transpose(),
    })
    .expect("reference drift model")
}

pub fn reference_pipeline() -> Pipeline {
    let config = StudyConfig {
        expert_scaling: ExpertScaling::Diffusion,
        ..StudyConfig::default()
    };
    Pipeline::new(reference_market(), reference_model(), config).expect("reference pipeline")
}

/// A d-asset market with a diagonally dominant volatility and a matching ellipsoid.
pub fn instance(d: usize) -> (ValidatedMarket, ConstraintGeometry, Ellipsoid) {
    let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 0.2 } else { 0.03 });
    let market = validate_market(MarketParams {
        d,
        m: d,
        r: 0.01,
        sigma,
        gamma: -1.0,
        h: 1.0,
        horizon: 1.0,
        x0: 1.0,
    })
    .expect("instance market");
    let geom = constraint_geometry(&market).expect("instance geometry");
    let nu = DVector::from_fn(d, |i, _| 0.02 + 0.01 * i as f64);
    let gamma = DMatrix::from_fn(d, d, |i, j| if i == j { 0.02 } else { 0.005 });
    let k = Ellipsoid::new(nu, gamma, 0.3).expect("instance ellipsoid");
    (market, geom, k)
}
