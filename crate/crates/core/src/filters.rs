//! Conditional mean and covariance of the Ornstein–Uhlenbeck drift under the
//! four information structures: none, returns, experts, and both.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::market::{DriftModelParams, ValidatedDriftModel};

/// Negative eigenvalues down to `-PSD_TOLERANCE` are clipped silently.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub m_hat: DVector<f64>,
    pub q: DMatrix<f64>,
}

impl FilterState {
    pub fn initial(model: &ValidatedDriftModel) -> Self {
        Self {
            t: 0.0,
            m_hat: model.m0().clone(),
            q: linalg::symmetrize(model.sigma0()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertOpinion {
    pub t_k: f64,
    pub z: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FiltrationKind {
    N,
    R,
    E,
    C,
}

impl FiltrationKind {
    pub const ALL: [FiltrationKind; 4] = [Self::N, Self::R, Self::E, Self::C];

    pub fn observes_returns(self) -> bool {
        matches!(self, Self::R | Self::C)
    }

    pub fn observes_experts(self) -> bool {
        matches!(self, Self::E | Self::C)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::N => "N",
            Self::R => "R",
            Self::E => "E",
            Self::C => "C",
        }
    }
}

impl std::fmt::Display for FiltrationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl serde::Serialize for FiltrationKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl std::str::FromStr for FiltrationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "N" | "n" => Ok(Self::N),
            "R" | "r" => Ok(Self::R),
            "E" | "e" => Ok(Self::E),
            "C" | "c" => Ok(Self::C),
            other => Err(format!(
                "unknown filtration '{other}', expected one of N, R, E, C"
            )),
        }
    }
}

fn repair(q: DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let (fixed, lowest) = linalg::project_psd(&q);
    if lowest < -PSD_TOLERANCE {
        return Err(Error::StepTooLarge(dt));
    }
    Ok(fixed)
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::OutOfDomain(format!(
            "time step {dt} must be positive"
        )));
    }
    Ok(())
}

/// `(σ_R σ_Rᵀ)⁻¹`
fn obs_precision(model: &DriftModelParams) -> Result<DMatrix<f64>> {
    let s = &model.sigma_r * model.sigma_r.transpose();
    Cholesky::new(s)
        .map(|c| linalg::symmetrize(&c.inverse()))
        .ok_or_else(|| Error::FactorizationFailed("sigma_R sigma_Rᵀ is singular".into()))
}

/// One explicit Euler step of the mean ODE and the Lyapunov equation.
pub fn propagate(state: &FilterState, dt: f64, model: &DriftModelParams) -> Result<FilterState> {
    check_dt(dt)?;
    let a = &model.alpha;
    let m_hat = &state.m_hat + a * (&model.delta - &state.m_hat) * dt;
    let drift = -(a * &state.q) - &state.q * a.transpose() + &model.beta * model.beta.transpose();
    let q = repair(&state.q + drift * dt, dt)?;
    Ok(FilterState {
        t: state.t + dt,
        m_hat,
        q,
    })
}

/// One explicit Kalman–Bucy step driven by the return increment `dR`.
pub fn kalman_step(
    state: &FilterState,
    dr: &DVector<f64>,
    dt: f64,
    model: &DriftModelParams,
) -> Result<FilterState> {
    check_dt(dt)?;
    let s = obs_precision(model)?;
    let a = &model.alpha;
    let gain = &state.q * &s;
    let innovation = dr - &state.m_hat * dt;
    let m_hat = &state.m_hat + a * (&model.delta - &state.m_hat) * dt + &gain * innovation;
    let drift = -(a * &state.q) - &state.q * a.transpose() + &model.beta * model.beta.transpose()
        - &gain * &state.q;
    let q = repair(&state.q + drift * dt, dt)?;
    Ok(FilterState {
        t: state.t + dt,
        m_hat,
        q,
    })
}

/// Gaussian conjugate update with a view `Z ~ N(μ, Γ_k)`.
pub fn expert_update(state: &FilterState, opinion: &ExpertOpinion) -> Result<FilterState> {
    let tol = 1e-9 * state.t.abs().max(1.0);
    if (opinion.t_k - state.t).abs() > tol {
        return Err(Error::GridMismatch(format!(
            "expert dated {} applied to state at {}",
            opinion.t_k, state.t
        )));
    }
    let total = linalg::symmetrize(&(&state.q + &opinion.cov));
    let chol = Cholesky::new(total).ok_or(Error::SingularUpdate)?;
    // K = q (q + Γ)⁻¹, computed as ((q + Γ)⁻¹ q)ᵀ
    let gain = chol.solve(&state.q).transpose();
    let m_hat = &state.m_hat + &gain * (&opinion.z - &state.m_hat);
    let q_new = &state.q - &gain * &state.q;
    let (q, lowest) = linalg::project_psd(&q_new);
    if lowest < -PSD_TOLERANCE * state.q.amax().max(1.0) {
        return Err(Error::SingularUpdate);
    }
    Ok(FilterState {
        t: state.t,
        m_hat,
        q,
    })
}

/// Runs the filter of `kind` over `grid`. Returns `n_steps + 1` states, the
/// state at an information date already including that date's opinions.
/// `returns[i]` is the increment over `[t_i, t_{i+1}]`; it may be empty for
/// kinds that do not observe returns.
pub fn run_filter(
    kind: FiltrationKind,
    returns: &[DVector<f64>],
    experts: &[ExpertOpinion],
    model: &ValidatedDriftModel,
    grid: &TimeGrid,
) -> Result<Vec<FilterState>> {
    let n = grid.n_steps();
    let d = model.d();
    if kind.observes_returns() {
        if returns.len() != n {
            return Err(Error::GridMismatch(format!(
                "{} return increments for {n} grid steps",
                returns.len()
            )));
        }
        if let Some(bad) = returns.iter().find(|r| r.len() != d) {
            return Err(Error::GridMismatch(format!(
                "return increment of length {}, expected {d}",
                bad.len()
            )));
        }
    }
    let mut by_index: Vec<Vec<&ExpertOpinion>> = vec![Vec::new(); n + 1];
    if kind.observes_experts() {
        for e in experts {
            let i = grid.index_of(e.t_k).ok_or_else(|| {
                Error::GridMismatch(format!("expert date {} is not a grid point", e.t_k))
            })?;
            if e.z.len() != d || e.cov.nrows() != d || e.cov.ncols() != d {
                return Err(Error::GridMismatch(format!(
                    "expert opinion at {} has wrong dimension",
                    e.t_k
                )));
            }
            by_index[i].push(e);
        }
    }
    let params = model.params();
    let dt = grid.dt();
    let apply = |mut s: FilterState, i: usize| -> Result<FilterState> {
        s.t = grid.time(i);
        for e in &by_index[i] {
            let at_date = ExpertOpinion {
                t_k: s.t,
                z: e.z.clone(),
                cov: e.cov.clone(),
            };
            s = expert_update(&s, &at_date)?;
        }
        Ok(s)
    };
    let mut path = Vec::with_capacity(n + 1);
    let mut state = apply(FilterState::initial(model), 0)?;
    path.push(state.clone());
    #[allow(clippy::needless_range_loop)] // `returns` is empty for N and E
    for i in 0..n {
        state = if kind.observes_returns() {
            kalman_step(&state, &returns[i], dt, params)?
        } else {
            propagate(&state, dt, params)?
        };
        state = apply(state, i + 1)?;
        path.push(state.clone());
    }
    Ok(path)
}

/// `−αq − qαᵀ + ββᵀ − q(σ_Rσ_Rᵀ)⁻¹q`
pub fn riccati_residual(q: &DMatrix<f64>, model: &DriftModelParams) -> Result<DMatrix<f64>> {
    let s = obs_precision(model)?;
    let a = &model.alpha;
    Ok(-(a * q) - q * a.transpose() + &model.beta * model.beta.transpose() - q * s * q)
}

/// Stationary covariance of the return filter by Newton–Kleinman iteration
/// from `q = 0`: each step solves `A_k q + q A_kᵀ = ββᵀ + q_k S q_k` with
/// `A_k = α + q_k S`.
pub fn stationary_riccati(model: &DriftModelParams) -> Result<DMatrix<f64>> {
    let s = obs_precision(model)?;
    let bbt = &model.beta * model.beta.transpose();
    let d = model.alpha.nrows();
    let mut q = DMatrix::zeros(d, d);
    for _ in 0..100 {
        let a_k = &model.alpha + &q * &s;
        let rhs = &bbt + &q * &s * &q;
        let next = linalg::solve_lyapunov(&a_k, &rhs)?;
        let change = (&next - &q).norm();
        q = next;
        if change <= 1e-15 * q.norm().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(q)
}

/// Stationary covariance without observations: `αq + qαᵀ = ββᵀ`.
pub fn stationary_lyapunov(model: &DriftModelParams) -> Result<DMatrix<f64>> {
    linalg::solve_lyapunov(&model.alpha, &(&model.beta * model.beta.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::validate_drift_model;

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn scalar_model(beta: f64) -> DriftModelParams {
        DriftModelParams {
            alpha: m1(3.0),
            beta: m1(beta),
            delta: v1(0.02),
            m0: v1(0.02),
            sigma0: m1(0.0),
            sigma_r: m1(0.1),
            expert_cov: m1(0.04),
        }
    }

    fn st(m: f64, q: f64) -> FilterState {
        FilterState {
            t: 0.0,
            m_hat: v1(m),
            q: m1(q),
        }
    }

    #[test]
    fn mean_reversion_fixed_point() {
        let model = scalar_model(0.5);
        let mut s = st(0.02, 0.0);
        for _ in 0..1000 {
            s = propagate(&s, 1e-3, &model).unwrap();
            assert_eq!(s.m_hat[0], 0.02);
        }
    }

    #[test]
    fn propagated_mean_matches_closed_form() {
        let model = scalar_model(0.5);
        let mut s = st(0.05, 0.0);
        let n = 100_000;
        for _ in 0..n {
            s = propagate(&s, 1.0 / n as f64, &model).unwrap();
        }
        let exact = 0.02 + 0.03 * (-3f64).exp();
        assert!((exact - 0.0214936).abs() < 1e-7);
        assert!((s.m_hat[0] - exact).abs() < 1e-7);
        let q_exact = 0.25 / 6.0 * (1.0 - (-6f64).exp());
        assert!((s.q[(0, 0)] - q_exact).abs() < 1e-6);
    }

    #[test]
    fn lyapunov_limit() {
        let model = scalar_model(0.5);
        let mut s = st(0.02, 0.0);
        for _ in 0..20_000 {
            s = propagate(&s, 1e-3, &model).unwrap();
        }
        assert!((s.q[(0, 0)] - 0.0416667).abs() < 1e-6);
        let q = stationary_lyapunov(&model).unwrap();
        assert!((q[(0, 0)] - 0.25 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn riccati_stationary_point() {
        let model = scalar_model(0.5);
        let q = stationary_riccati(&model).unwrap();
        let exact = (-6.0 + 136f64.sqrt()) / 200.0;
        assert!((exact - 0.0283095).abs() < 1e-7);
        assert!((q[(0, 0)] - exact).abs() < 1e-14);
        assert!(riccati_residual(&q, &model).unwrap().norm() < 1e-12);
        let dt = 1e-3;
        let next = kalman_step(&st(0.02, exact), &v1(0.02 * dt), dt, &model).unwrap();
        assert!((next.q[(0, 0)] - exact).abs() < 1e-14);
    }

    #[test]
    fn zero_noise_gives_zero_gain() {
        let model = scalar_model(0.0);
        let mut s = st(0.05, 0.0);
        let mut plain = s.clone();
        for i in 0..100 {
            s = kalman_step(&s, &v1(if i % 2 == 0 { 0.3 } else { -0.2 }), 0.01, &model).unwrap();
            plain = propagate(&plain, 0.01, &model).unwrap();
            assert_eq!(s.q[(0, 0)], 0.0);
            assert_eq!(s.m_hat, plain.m_hat);
        }
    }

    #[test]
    fn zero_innovation_is_propagation() {
        let model = scalar_model(0.5);
        let s = st(0.05, 0.03);
        let dt = 0.004;
        let k = kalman_step(&s, &v1(0.05 * dt), dt, &model).unwrap();
        let p = propagate(&s, dt, &model).unwrap();
        assert!((k.m_hat[0] - p.m_hat[0]).abs() < 1e-17);
    }

    #[test]
    fn oversized_step_detected() {
        let model = scalar_model(0.5);
        assert!(matches!(
            kalman_step(&st(0.0, 1.0), &v1(0.0), 1.0, &model),
            Err(Error::StepTooLarge(_))
        ));
        assert!(propagate(&st(0.0, 1.0), 0.0, &model).is_err());
    }

    #[test]
    fn expert_scalar_example() {
        let s = st(0.02, 0.04);
        let op = ExpertOpinion {
            t_k: 0.0,
            z: v1(0.06),
            cov: m1(0.04),
        };
        let u = expert_update(&s, &op).unwrap();
        assert!((u.m_hat[0] - 0.04).abs() < 1e-15);
        assert!((u.q[(0, 0)] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn expert_limits() {
        let s = FilterState {
            t: 0.5,
            m_hat: DVector::from_column_slice(&[0.02, 0.01]),
            q: DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.03]),
        };
        let z = DVector::from_column_slice(&[0.1, -0.05]);
        let noisy = ExpertOpinion {
            t_k: 0.5,
            z: z.clone(),
            cov: DMatrix::identity(2, 2) * 1e12,
        };
        let u = expert_update(&s, &noisy).unwrap();
        assert!((&u.m_hat - &s.m_hat).amax() < 1e-9 && (&u.q - &s.q).amax() < 1e-9);
        let sharp = ExpertOpinion {
            t_k: 0.5,
            z: z.clone(),
            cov: DMatrix::identity(2, 2) * 1e-12,
        };
        let u = expert_update(&s, &sharp).unwrap();
        assert!((&u.m_hat - &z).amax() < 1e-9 && u.q.amax() < 1e-9);
        let late = ExpertOpinion {
            t_k: 0.7,
            z,
            cov: DMatrix::identity(2, 2),
        };
        assert!(matches!(
            expert_update(&s, &late),
            Err(Error::GridMismatch(_))
        ));
    }

    fn model2() -> ValidatedDriftModel {
        validate_drift_model(DriftModelParams {
            alpha: DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 3.0]),
            beta: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]),
            delta: DVector::from_column_slice(&[0.02, 0.02]),
            m0: DVector::from_column_slice(&[0.02, 0.02]),
            sigma0: DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.04]),
            sigma_r: DMatrix::from_row_slice(2, 2, &[0.1, 0.05, 0.05, 0.1]),
            expert_cov: DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]),
        })
        .unwrap()
    }

    fn returns(n: usize) -> Vec<DVector<f64>> {
        (0..n)
            .map(|i| {
                DVector::from_column_slice(&[0.001 * (i as f64).sin(), -0.0005 * (i as f64).cos()])
            })
            .collect()
    }

    fn experts(grid: &TimeGrid) -> Vec<ExpertOpinion> {
        (1..=4)
            .map(|k| ExpertOpinion {
                t_k: grid.time(50 * k),
                z: DVector::from_column_slice(&[0.03 * k as f64, -0.01]),
                cov: DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]),
            })
            .collect()
    }

    #[test]
    fn channel_degeneracy() {
        let m = model2();
        let g = TimeGrid::new(1.0, 250).unwrap();
        let r = returns(250);
        let n = run_filter(FiltrationKind::N, &[], &[], &m, &g).unwrap();
        let e = run_filter(FiltrationKind::E, &[], &[], &m, &g).unwrap();
        assert_eq!(n, e);
        let rr = run_filter(FiltrationKind::R, &r, &[], &m, &g).unwrap();
        let c = run_filter(FiltrationKind::C, &r, &[], &m, &g).unwrap();
        assert_eq!(rr, c);
        assert_eq!(n.len(), 251);
        assert!(n.iter().all(|s| (s.m_hat[0] - 0.02).abs() < 1e-15));
    }

    #[test]
    fn combined_covariance_jumps_only_at_dates() {
        let m = model2();
        let g = TimeGrid::new(1.0, 250).unwrap();
        let ex = experts(&g);
        let r = returns(250);
        let c = run_filter(FiltrationKind::C, &r, &ex, &m, &g).unwrap();
        let plain = run_filter(FiltrationKind::R, &r, &[], &m, &g).unwrap();
        let dates: Vec<usize> = (1..=4).map(|k| 50 * k).collect();
        for i in 1..=250 {
            let pred = kalman_step(&c[i - 1], &r[i - 1], g.dt(), m.params()).unwrap();
            let jump = &pred.q - &c[i].q;
            if dates.contains(&i) {
                assert!(linalg::min_eigenvalue(&jump) > 1e-6);
            } else {
                assert!(jump.amax() < 1e-15);
            }
            assert!(linalg::min_eigenvalue(&c[i].q) >= -1e-10);
        }
        for k in [FiltrationKind::N, FiltrationKind::R, FiltrationKind::E] {
            let p = run_filter(k, &r, &ex, &m, &g).unwrap();
            assert!(c[250].q.trace() <= p[250].q.trace() + 1e-15);
        }
        assert!(c[250].q.trace() < plain[250].q.trace());
    }

    #[test]
    fn grid_mismatch_errors() {
        let m = model2();
        let g = TimeGrid::new(1.0, 250).unwrap();
        assert!(matches!(
            run_filter(FiltrationKind::R, &returns(10), &[], &m, &g),
            Err(Error::GridMismatch(_))
        ));
        let off = vec![ExpertOpinion {
            t_k: 0.1234,
            z: DVector::zeros(2),
            cov: DMatrix::identity(2, 2),
        }];
        assert!(matches!(
            run_filter(FiltrationKind::E, &[], &off, &m, &g),
            Err(Error::GridMismatch(_))
        ));
        // experts are ignored by kinds that do not observe them
        assert!(run_filter(FiltrationKind::N, &[], &off, &m, &g).is_ok());
    }

    #[test]
    fn stationary_riccati_matrix_case() {
        let m = model2();
        let q = stationary_riccati(m.params()).unwrap();
        assert!(riccati_residual(&q, m.params()).unwrap().norm() <= 1e-8);
        assert!(linalg::min_eigenvalue(&q) > 0.0);
        let g = TimeGrid::new(5.0, 50_000).unwrap();
        let r = vec![DVector::zeros(2); 50_000];
        let path = run_filter(FiltrationKind::R, &r, &[], &m, &g).unwrap();
        assert!((&path[50_000].q - &q).amax() < 1e-5);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("C".parse::<FiltrationKind>().unwrap(), FiltrationKind::C);
        assert!("X".parse::<FiltrationKind>().is_err());
        assert!(FiltrationKind::C.observes_returns() && FiltrationKind::C.observes_experts());
        assert!(!FiltrationKind::N.observes_returns() && !FiltrationKind::N.observes_experts());
    }
}
