#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use robustdrift_core::*;

#[derive(Debug, Clone)]
pub struct Instance {
    pub market: ValidatedMarket,
    pub geom: ConstraintGeometry,
    pub k: Ellipsoid,
}

pub fn market(sigma: DMatrix<f64>, r: f64, gamma: f64, h: f64) -> ValidatedMarket {
    let (d, m) = sigma.shape();
    validate_market(MarketParams {
        d,
        m,
        r,
        sigma,
        gamma,
        h,
        horizon: 1.0,
        x0: 1.0,
    })
    .unwrap()
}

/// Diagonally dominated volatility, well conditioned.
pub fn sigma_strategy(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (
        prop::collection::vec(-0.08..0.08f64, d * d),
        prop::collection::vec(0.1..0.4f64, d),
    )
        .prop_map(move |(off, diag)| {
            let mut s = DMatrix::from_row_slice(d, d, &off);
            for i in 0..d {
                s[(i, i)] = diag[i];
            }
            s
        })
}

/// `LLᵀ + εI` scaled into a plausible drift-covariance range.
pub fn spd_strategy(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (
        prop::collection::vec(-1.0..1.0f64, d * d),
        0.05..1.0f64,
        0.001..0.05f64,
    )
        .prop_map(move |(l, eps, scale)| {
            let l = DMatrix::from_row_slice(d, d, &l);
            (&l * l.transpose() + DMatrix::identity(d, d) * eps) * scale
        })
}

pub fn instance_strategy(
    d: usize,
    gammas: Vec<f64>,
    hs: Vec<f64>,
) -> impl Strategy<Value = Instance> {
    (
        sigma_strategy(d),
        spd_strategy(d),
        prop::collection::vec(-0.2..0.2f64, d),
        0.01..0.5f64,
        prop::sample::select(gammas),
        prop::sample::select(hs),
        -0.02..0.05f64,
    )
        .prop_map(|(sigma, gamma_mat, nu, kappa, gamma, h, r)| {
            let market = market(sigma, r, gamma, h);
            let geom = constraint_geometry(&market).unwrap();
            let k = Ellipsoid::new(DVector::from_vec(nu), gamma_mat, kappa).unwrap();
            Instance { market, geom, k }
        })
}

pub fn two_asset_market(gamma: f64) -> (ValidatedMarket, ValidatedDriftModel) {
    let m2 = |a: [f64; 4]| DMatrix::from_row_slice(2, 2, &a);
    let sigma = m2([0.10, 0.05, 0.05, 0.10]);
    let market = validate_market(MarketParams {
        d: 2,
        m: 2,
        r: 0.0,
        sigma: sigma.clone(),
        gamma,
        h: 1.0,
        horizon: 1.0,
        x0: 1.0,
    })
    .unwrap();
    let model = validate_drift_model(DriftModelParams {
        alpha: m2([3.0, 0.0, 0.0, 2.0]),
        beta: m2([0.5, 0.25, 0.25, 0.5]),
        delta: DVector::from_column_slice(&[0.02, 0.03]),
        m0: DVector::from_column_slice(&[0.02, 0.03]),
        sigma0: m2([0.01, 0.0, 0.0, 0.01]),
        sigma_r: sigma.clone(),
        expert_cov: &sigma * sigma.transpose(),
    })
    .unwrap();
    (market, model)
}

pub fn two_asset_pipeline(gamma: f64, config: StudyConfig) -> Pipeline {
    let (market, model) = two_asset_market(gamma);
    Pipeline::new(market, model, config).unwrap()
}
