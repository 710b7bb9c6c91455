//! Static market description, drift dynamics and their validation.

use nalgebra::{DMatrix, DVector};

use crate::error::{ValidationError, Violation};
use crate::linalg;

/// Singular values of sigma below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    /// Number of risky assets.
    pub d: usize,
    /// Dimension of the driving Brownian motion.
    pub m: usize,
    pub r: f64,
    /// Return volatility, d×m.
    pub sigma: DMatrix<f64>,
    pub gamma: f64,
    /// Budget level: every admissible strategy satisfies `1ᵀπ = h`.
    pub h: f64,
    pub horizon: f64,
    pub x0: f64,
}

/// Power utility `x^γ/γ`, or log utility when `γ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityKind {
    pub gamma: f64,
}

impl UtilityKind {
    pub fn new(gamma: f64) -> Self {
        UtilityKind { gamma }
    }

    pub fn is_log(&self) -> bool {
        self.gamma == 0.0
    }

    /// Utility of positive wealth; `None` for `x ≤ 0`.
    pub fn eval(&self, x: f64) -> Option<f64> {
        if x <= 0.0 || !x.is_finite() {
            return None;
        }
        Some(if self.is_log() {
            x.ln()
        } else {
            x.powf(self.gamma) / self.gamma
        })
    }

    /// Utility evaluated from log-wealth, avoiding overflow of `exp`.
    pub fn eval_log_wealth(&self, log_x: f64) -> f64 {
        if self.is_log() {
            log_x
        } else {
            (self.gamma * log_x).exp() / self.gamma
        }
    }
}

/// A market that passed [`validate_market`]. The only way to build one.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedMarket(MarketParams);

impl ValidatedMarket {
    pub fn params(&self) -> &MarketParams {
        &self.0
    }

    pub fn d(&self) -> usize {
        self.0.d
    }

    pub fn r(&self) -> f64 {
        self.0.r
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.0.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.0.gamma
    }

    pub fn h(&self) -> f64 {
        self.0.h
    }

    pub fn horizon(&self) -> f64 {
        self.0.horizon
    }

    pub fn x0(&self) -> f64 {
        self.0.x0
    }

    pub fn utility(&self) -> UtilityKind {
        UtilityKind::new(self.0.gamma)
    }

    pub fn into_params(self) -> MarketParams {
        self.0
    }
}

fn check_positive(name: &'static str, value: f64, out: &mut Vec<Violation>) {
    if !(value > 0.0) || !value.is_finite() {
        out.push(Violation::NonPositive { name, value });
    }
}

/// Checks every standing assumption on the market and reports all failures at once.
pub fn validate_market(raw: MarketParams) -> Result<ValidatedMarket, ValidationError> {
    let mut v = Vec::new();
    if raw.d < 2 {
        v.push(Violation::BadDimension(format!(
            "d = {} but at least 2 risky assets are required",
            raw.d
        )));
    }
    if raw.m < raw.d {
        v.push(Violation::BadDimension(format!(
            "m = {} must be >= d = {}",
            raw.m, raw.d
        )));
    }
    if raw.sigma.nrows() != raw.d || raw.sigma.ncols() != raw.m {
        v.push(Violation::BadDimension(format!(
            "sigma is {}x{}, expected {}x{}",
            raw.sigma.nrows(),
            raw.sigma.ncols(),
            raw.d,
            raw.m
        )));
    } else if !linalg::all_finite(&raw.sigma) {
        v.push(Violation::NonFinite("sigma"));
    } else if raw.d > 0 {
        let sv = raw.sigma.singular_values();
        let largest = sv.max();
        let smallest = sv.min();
        if !(smallest > RANK_TOLERANCE * largest) {
            v.push(Violation::RankDeficient { smallest, largest });
        }
    }
    if !(raw.gamma < 1.0) || !raw.gamma.is_finite() {
        v.push(Violation::BadRiskAversion(raw.gamma));
    }
    if !raw.r.is_finite() {
        v.push(Violation::NonFinite("r"));
    }
    check_positive("h", raw.h, &mut v);
    check_positive("T", raw.horizon, &mut v);
    check_positive("x0", raw.x0, &mut v);
    if v.is_empty() {
        Ok(ValidatedMarket(raw))
    } else {
        Err(ValidationError(v))
    }
}

/// Ornstein–Uhlenbeck drift `dμ = α(δ − μ)dt + β dB` plus the observation model.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftModelParams {
    pub alpha: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub delta: DVector<f64>,
    pub m0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    /// Return observation volatility, d×m.
    pub sigma_r: DMatrix<f64>,
    /// Covariance Γ_k shared by every expert opinion.
    pub expert_cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDriftModel(DriftModelParams);

impl ValidatedDriftModel {
    pub fn params(&self) -> &DriftModelParams {
        &self.0
    }

    pub fn d(&self) -> usize {
        self.0.delta.len()
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.0.alpha
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.0.beta
    }

    pub fn delta(&self) -> &DVector<f64> {
        &self.0.delta
    }

    pub fn m0(&self) -> &DVector<f64> {
        &self.0.m0
    }

    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.0.sigma0
    }

    pub fn sigma_r(&self) -> &DMatrix<f64> {
        &self.0.sigma_r
    }

    pub fn expert_cov(&self) -> &DMatrix<f64> {
        &self.0.expert_cov
    }

    /// `ββᵀ`
    pub fn beta_beta_t(&self) -> DMatrix<f64> {
        &self.0.beta * self.0.beta.transpose()
    }

    /// `(σ_R σ_Rᵀ)⁻¹`
    pub fn obs_precision(&self) -> DMatrix<f64> {
        let s = &self.0.sigma_r * self.0.sigma_r.transpose();
        // validated full rank, so the inverse exists
        linalg::symmetrize(&s.try_inverse().expect("sigma_r validated full rank"))
    }

    /// Returns a copy with the expert covariance replaced.
    pub fn with_expert_cov(&self, cov: DMatrix<f64>) -> Result<Self, ValidationError> {
        let mut p = self.0.clone();
        p.expert_cov = cov;
        validate_drift_model(p)
    }

    pub fn into_params(self) -> DriftModelParams {
        self.0
    }
}

fn check_square(name: &'static str, m: &DMatrix<f64>, d: usize, v: &mut Vec<Violation>) -> bool {
    if m.nrows() != d || m.ncols() != d {
        v.push(Violation::BadDimension(format!(
            "{name} is {}x{}, expected {d}x{d}",
            m.nrows(),
            m.ncols()
        )));
        return false;
    }
    if !linalg::all_finite(m) {
        v.push(Violation::NonFinite(name));
        return false;
    }
    true
}

fn check_spd(name: &'static str, m: &DMatrix<f64>, v: &mut Vec<Violation>) {
    if !linalg::is_symmetric(m, SYMMETRY_TOLERANCE) {
        v.push(Violation::NotSymmetric(name));
    } else if !(linalg::min_eigenvalue(m) > 0.0) {
        v.push(Violation::NotPositiveDefinite(name));
    }
}

pub fn validate_drift_model(raw: DriftModelParams) -> Result<ValidatedDriftModel, ValidationError> {
    let mut v = Vec::new();
    let d = raw.delta.len();
    if d == 0 {
        v.push(Violation::BadDimension("delta is empty".into()));
        return Err(ValidationError(v));
    }
    if raw.m0.len() != d {
        v.push(Violation::BadDimension(format!(
            "m0 has length {}, expected {d}",
            raw.m0.len()
        )));
    }
    if raw
        .delta
        .iter()
        .chain(raw.m0.iter())
        .any(|x| !x.is_finite())
    {
        v.push(Violation::NonFinite("delta/m0"));
    }
    if check_square("alpha", &raw.alpha, d, &mut v) {
        check_spd("alpha", &raw.alpha, &mut v);
    }
    if check_square("beta", &raw.beta, d, &mut v) {
        let bbt = &raw.beta * raw.beta.transpose();
        if !(linalg::min_eigenvalue(&bbt) > 0.0) {
            v.push(Violation::NotPositiveDefinite("beta betaᵀ"));
        }
    }
    if check_square("Sigma0", &raw.sigma0, d, &mut v) {
        if !linalg::is_symmetric(&raw.sigma0, SYMMETRY_TOLERANCE) {
            v.push(Violation::NotSymmetric("Sigma0"));
        } else if linalg::min_eigenvalue(&raw.sigma0) < -1e-12 * raw.sigma0.amax().max(1.0) {
            v.push(Violation::NotPositiveSemidefinite("Sigma0"));
        }
    }
    if check_square("expert_cov", &raw.expert_cov, d, &mut v) {
        check_spd("expert_cov", &raw.expert_cov, &mut v);
    }
    if raw.sigma_r.nrows() != d || raw.sigma_r.ncols() < d {
        v.push(Violation::BadDimension(format!(
            "sigma_r is {}x{}, expected {d}xm with m >= {d}",
            raw.sigma_r.nrows(),
            raw.sigma_r.ncols()
        )));
    } else if !linalg::all_finite(&raw.sigma_r) {
        v.push(Violation::NonFinite("sigma_r"));
    } else {
        let sv = raw.sigma_r.singular_values();
        if !(sv.min() > RANK_TOLERANCE * sv.max()) {
            v.push(Violation::RankDeficient {
                smallest: sv.min(),
                largest: sv.max(),
            });
        }
    }
    if v.is_empty() {
        Ok(ValidatedDriftModel(raw))
    } else {
        Err(ValidationError(v))
    }
}
