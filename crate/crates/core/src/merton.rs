//! Budget-constrained Merton problem: constraint geometry `(D, A, c)`, the
//! optimal strategy for a known drift, the reduced (d−1)-asset market and
//! closed-form expected utilities along piecewise-constant paths.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg;
use crate::market::ValidatedMarket;

/// `D`, `A = Dᵀ(DσσᵀDᵀ)⁻¹D` and `c = (I − Aσσᵀ)e_d` for one market.
#[derive(Debug, Clone)]
pub struct ConstraintGeometry {
    pub d_mat: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Factorization of `DσσᵀDᵀ`.
    pub chol: Cholesky<f64, Dyn>,
    /// `σσᵀ`, kept for the reduced market.
    pub cov: DMatrix<f64>,
}

/// Strategy in wealth fractions; `1ᵀπ = h` for every allocation built here.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub pi: DVector<f64>,
}

impl Allocation {
    pub fn budget(&self) -> f64 {
        self.pi.sum()
    }

    /// Builds `(p₁, …, p_{d−1}, h − Σp)`.
    pub fn from_free(free: &[f64], h: f64) -> Self {
        let mut pi = DVector::zeros(free.len() + 1);
        for (i, p) in free.iter().enumerate() {
            pi[i] = *p;
        }
        pi[free.len()] = h - free.iter().sum::<f64>();
        Allocation { pi }
    }
}

/// The reduced market `σ̃ = Dσ`, with `r̃`, `μ̃` evaluated per path segment.
#[derive(Debug, Clone)]
pub struct TransformedMarket {
    pub sigma_tilde: DMatrix<f64>,
    pub r_tilde: Vec<f64>,
    pub mu_tilde: Vec<DVector<f64>>,
}

/// The `(d−1)×d` matrix with ones on the diagonal and −1 in the last column.
pub fn reduction_matrix(d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d - 1, d);
    for i in 0..d - 1 {
        m[(i, i)] = 1.0;
        m[(i, d - 1)] = -1.0;
    }
    m
}

pub fn constraint_geometry(market: &ValidatedMarket) -> Result<ConstraintGeometry> {
    let d = market.d();
    let sigma = market.sigma();
    let cov = sigma * sigma.transpose();
    let d_mat = reduction_matrix(d);
    let reduced = linalg::symmetrize(&(&d_mat * &cov * d_mat.transpose()));
    let chol = Cholesky::new(reduced)
        .ok_or_else(|| Error::FactorizationFailed("D σσᵀ Dᵀ is not positive definite".into()))?;
    let a = linalg::symmetrize(&(d_mat.transpose() * chol.solve(&d_mat)));
    let e_d = linalg::unit(d, d - 1);
    let c = &e_d - &a * (&cov * &e_d);
    Ok(ConstraintGeometry {
        d_mat,
        a,
        c,
        chol,
        cov,
    })
}

/// `π = Aμ/(1−γ) + hc`.
pub fn merton_strategy(
    geom: &ConstraintGeometry,
    mu: &DVector<f64>,
    gamma: f64,
    h: f64,
) -> Allocation {
    Allocation {
        pi: &geom.a * mu / (1.0 - gamma) + &geom.c * h,
    }
}

/// A piecewise-constant path: `values[i]` holds on `[breaks[i], breaks[i+1])`.
#[derive(Debug, Clone, Copy)]
pub struct StepPath<'a> {
    pub breaks: &'a [f64],
    pub values: &'a [DVector<f64>],
}

impl<'a> StepPath<'a> {
    pub fn new(breaks: &'a [f64], values: &'a [DVector<f64>]) -> Result<Self> {
        if breaks.is_empty() {
            return Err(Error::GridMismatch(
                "a path needs at least one break point".into(),
            ));
        }
        if values.len() + 1 != breaks.len() {
            return Err(Error::GridMismatch(format!(
                "{} values on {} break points",
                values.len(),
                breaks.len()
            )));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch(
                "break points must be strictly increasing".into(),
            ));
        }
        Ok(StepPath { breaks, values })
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn end(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, &'a DVector<f64>)> + 'a {
        let breaks = self.breaks;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (breaks[i + 1] - breaks[i], v))
    }
}

pub fn transform_market(
    market: &ValidatedMarket,
    geom: &ConstraintGeometry,
    mu_path: &StepPath<'_>,
    h: f64,
    gamma: f64,
) -> TransformedMarket {
    let d = market.d();
    let e_d = linalg::unit(d, d - 1);
    let sigma_tilde = &geom.d_mat * market.sigma();
    let vol_shift = 0.5 * (1.0 - gamma) * (market.sigma().transpose() * &e_d * h).norm_squared();
    let cov_shift = &geom.d_mat * (&geom.cov * &e_d) * (h * (1.0 - gamma));
    let mut r_tilde = Vec::with_capacity(mu_path.values.len());
    let mut mu_tilde = Vec::with_capacity(mu_path.values.len());
    for mu in mu_path.values {
        let rt = (1.0 - h) * market.r() + h * mu[d - 1] - vol_shift;
        let mt = &geom.d_mat * mu - &cov_shift + DVector::from_element(d - 1, rt);
        r_tilde.push(rt);
        mu_tilde.push(mt);
    }
    TransformedMarket {
        sigma_tilde,
        r_tilde,
        mu_tilde,
    }
}

/// Instantaneous growth rate `πᵀ(μ − r1) − ((1−γ)/2)‖σᵀπ‖²` of `log E[U]`/γ.
fn segment_rate(market: &ValidatedMarket, pi: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    let gamma = market.gamma();
    let excess = pi.dot(mu) - market.r() * pi.sum();
    let var = (market.sigma().transpose() * pi).norm_squared();
    excess - 0.5 * (1.0 - gamma) * var
}

/// `E_μ[U_γ(X_T) | X_t = x]` for deterministic piecewise-constant strategy and drift.
/// The time integral is summed exactly segment by segment.
pub fn expected_utility(
    market: &ValidatedMarket,
    strategy: &StepPath<'_>,
    drift: &StepPath<'_>,
    x: f64,
) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonPositiveWealth(x));
    }
    if strategy.breaks.len() != drift.breaks.len()
        || strategy
            .breaks
            .iter()
            .zip(drift.breaks)
            .any(|(a, b)| a != b)
    {
        return Err(Error::GridMismatch(
            "strategy and drift break points differ".into(),
        ));
    }
    let t = strategy.start();
    if (strategy.end() - market.horizon()).abs() > 1e-12 * market.horizon().max(1.0) {
        return Err(Error::GridMismatch(format!(
            "paths end at {} but the horizon is {}",
            strategy.end(),
            market.horizon()
        )));
    }
    let integral: f64 = strategy
        .segments()
        .zip(drift.values)
        .map(|((dt, pi), mu)| dt * segment_rate(market, pi, mu))
        .sum();
    Ok(utility_from_integral(
        market,
        market.horizon() - t,
        integral,
        x,
    ))
}

fn utility_from_integral(market: &ValidatedMarket, remaining: f64, integral: f64, x: f64) -> f64 {
    let gamma = market.gamma();
    if gamma == 0.0 {
        x.ln() + market.r() * remaining + integral
    } else {
        x.powf(gamma) / gamma * (gamma * (market.r() * remaining + integral)).exp()
    }
}

/// [`expected_utility`] for constant strategy and drift over `[T − remaining, T]`.
pub fn expected_utility_constant(
    market: &ValidatedMarket,
    pi: &DVector<f64>,
    mu: &DVector<f64>,
    remaining: f64,
    x: f64,
) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonPositiveWealth(x));
    }
    Ok(utility_from_integral(
        market,
        remaining,
        remaining * segment_rate(market, pi, mu),
        x,
    ))
}

/// Optimal constrained expected utility for constant drift `μ`, computed in the
/// reduced market (unconstrained Merton value with `σ̃, r̃, μ̃`).
pub fn optimal_value_reduced(
    market: &ValidatedMarket,
    geom: &ConstraintGeometry,
    mu: &DVector<f64>,
    remaining: f64,
    x: f64,
) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonPositiveWealth(x));
    }
    let gamma = market.gamma();
    let breaks = [0.0, 1.0];
    let values = [mu.clone()];
    let path = StepPath::new(&breaks, &values)?;
    let tm = transform_market(market, geom, &path, market.h(), gamma);
    let rt = tm.r_tilde[0];
    let excess = &tm.mu_tilde[0] - DVector::from_element(market.d() - 1, rt);
    let st = &tm.sigma_tilde * tm.sigma_tilde.transpose();
    let chol = Cholesky::new(linalg::symmetrize(&st))
        .ok_or_else(|| Error::FactorizationFailed("σ̃σ̃ᵀ is not positive definite".into()))?;
    let quad = excess.dot(&chol.solve(&excess));
    // the reduced market carries the risk-free rate inside r̃
    let rate = rt + quad / (2.0 * (1.0 - gamma));
    Ok(if gamma == 0.0 {
        x.ln() + rate * remaining
    } else {
        x.powf(gamma) / gamma * (gamma * remaining * rate).exp()
    })
}

/// Merton strategy of the reduced market mapped back: `π = Dᵀπ̃ + h e_d`.
pub fn recompose_strategy(
    market: &ValidatedMarket,
    tm: &TransformedMarket,
    segment: usize,
    h: f64,
) -> Result<Allocation> {
    let d = market.d();
    let gamma = market.gamma();
    let st = &tm.sigma_tilde * tm.sigma_tilde.transpose();
    let chol = Cholesky::new(linalg::symmetrize(&st))
        .ok_or_else(|| Error::FactorizationFailed("σ̃σ̃ᵀ is not positive definite".into()))?;
    let excess = &tm.mu_tilde[segment] - DVector::from_element(d - 1, tm.r_tilde[segment]);
    let pi_tilde = chol.solve(&excess) / (1.0 - gamma);
    let d_mat = reduction_matrix(d);
    Ok(Allocation {
        pi: d_mat.transpose() * pi_tilde + linalg::unit(d, d - 1) * h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{validate_market, MarketParams};

    fn market(sigma: DMatrix<f64>, gamma: f64, h: f64) -> ValidatedMarket {
        let d = sigma.nrows();
        let m = sigma.ncols();
        validate_market(MarketParams {
            d,
            m,
            r: 0.0,
            sigma,
            gamma,
            h,
            horizon: 1.0,
            x0: 1.0,
        })
        .unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn identity_geometry() {
        let mk = market(DMatrix::identity(2, 2), 0.0, 1.0);
        let g = constraint_geometry(&mk).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!((&g.a - expect).amax() < 1e-15);
        assert!((&g.c - v(&[0.5, 0.5])).amax() < 1e-15);
    }

    #[test]
    fn diagonal_covariance_geometry() {
        // σσᵀ = diag(1, 4): DσσᵀDᵀ = 5, A = (1/5)[[1,−1],[−1,1]], c = e₂ − A(0,4) = (0.8, 0.2)
        let mk = market(DMatrix::from_diagonal(&v(&[1.0, 2.0])), 0.0, 1.0);
        let g = constraint_geometry(&mk).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]) / 5.0;
        assert!((&g.a - expect).amax() < 1e-15);
        assert!((&g.c - v(&[0.8, 0.2])).amax() < 1e-15);
    }

    #[test]
    fn geometry_identities_d3() {
        let sigma =
            DMatrix::from_row_slice(3, 3, &[0.2, 0.05, 0.0, 0.01, 0.15, 0.03, -0.02, 0.04, 0.25]);
        let mk = market(sigma, 0.3, 1.0);
        let g = constraint_geometry(&mk).unwrap();
        assert!((&g.a * linalg::ones(3)).amax() < 1e-12);
        assert!((g.c.sum() - 1.0).abs() < 1e-12);
        assert!((&g.d_mat * &g.cov * &g.c).amax() < 1e-12);
        assert!((&g.a - g.a.transpose()).amax() < 1e-12);
        assert_eq!(
            g.d_mat,
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 0.0, 1.0, -1.0])
        );
    }

    #[test]
    fn merton_examples() {
        let mk = market(DMatrix::identity(2, 2), 0.0, 1.0);
        let g = constraint_geometry(&mk).unwrap();
        let p = merton_strategy(&g, &v(&[0.1, 0.1]), 0.0, 1.0);
        assert!((&p.pi - v(&[0.5, 0.5])).amax() < 1e-15);
        let p = merton_strategy(&g, &v(&[0.2, 0.0]), 0.0, 1.0);
        assert!((&p.pi - v(&[0.6, 0.4])).amax() < 1e-15);
        let p = merton_strategy(&g, &v(&[0.2, 0.0]), 0.5, 1.0);
        assert!((&p.pi - v(&[0.7, 0.3])).amax() < 1e-15);
        assert!((p.budget() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transformed_market_zero_budget() {
        let mk = market(
            DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.2]),
            0.5,
            1.0,
        );
        let g = constraint_geometry(&mk).unwrap();
        let mu = v(&[0.07, 0.02]);
        let breaks = [0.0, 1.0];
        let vals = [mu.clone()];
        let path = StepPath::new(&breaks, &vals).unwrap();
        let tm = transform_market(&mk, &g, &path, 0.0, 0.5);
        assert_eq!(tm.r_tilde[0], mk.r());
        let expect = &g.d_mat * &mu + DVector::from_element(1, mk.r());
        assert!((&tm.mu_tilde[0] - expect).amax() < 1e-15);
        assert_eq!(tm.sigma_tilde, &g.d_mat * mk.sigma());
    }

    #[test]
    fn transformed_market_hand_example() {
        // r̃ = 0.1 − ½·‖e₂‖² = −0.4; μ̃ = Dμ − D e₂ + r̃ = 0 + 1 − 0.4 = 0.6
        let mk = market(DMatrix::identity(2, 2), 0.0, 1.0);
        let g = constraint_geometry(&mk).unwrap();
        let breaks = [0.0, 1.0];
        let vals = [v(&[0.1, 0.1])];
        let path = StepPath::new(&breaks, &vals).unwrap();
        let tm = transform_market(&mk, &g, &path, 1.0, 0.0);
        assert!((tm.r_tilde[0] + 0.4).abs() < 1e-15);
        assert!((tm.mu_tilde[0][0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn recomposition_matches_merton() {
        let mk = market(
            DMatrix::from_row_slice(2, 3, &[0.2, 0.05, 0.1, 0.03, 0.15, -0.05]),
            -1.0,
            0.7,
        );
        let g = constraint_geometry(&mk).unwrap();
        let mu = v(&[0.08, 0.03]);
        let breaks = [0.0, 1.0];
        let vals = [mu.clone()];
        let path = StepPath::new(&breaks, &vals).unwrap();
        let tm = transform_market(&mk, &g, &path, 0.7, -1.0);
        let back = recompose_strategy(&mk, &tm, 0, 0.7).unwrap();
        let direct = merton_strategy(&g, &mu, -1.0, 0.7);
        assert!((back.pi - direct.pi).amax() < 1e-12);
    }

    #[test]
    fn expected_utility_examples() {
        let mk = market(DMatrix::identity(2, 2), 0.0, 1.0);
        let pi = v(&[0.5, 0.5]);
        let mu = v(&[0.1, 0.1]);
        let u = expected_utility_constant(&mk, &pi, &mu, 1.0, 1.0).unwrap();
        assert!((u + 0.15).abs() < 1e-15);

        let mk = market(DMatrix::identity(2, 2), 0.5, 1.0);
        let u = expected_utility_constant(&mk, &pi, &mu, 1.0, 1.0).unwrap();
        assert!((u - 2.0 * (-0.0125f64).exp()).abs() < 1e-15);
        assert!((u - 1.975156).abs() < 1e-6);
    }

    #[test]
    fn zero_horizon_gives_log_wealth() {
        let mk = market(DMatrix::identity(2, 2), 0.0, 1.0);
        let breaks = [1.0];
        let path = StepPath::new(&breaks, &[]).unwrap();
        let u = expected_utility(&mk, &path, &path, 3.0).unwrap();
        assert_eq!(u, 3f64.ln());
    }

    #[test]
    fn expected_utility_errors() {
        let mk = market(DMatrix::identity(2, 2), 0.0, 1.0);
        let b1 = [0.0, 0.5, 1.0];
        let b2 = [0.0, 0.25, 1.0];
        let vals = [v(&[0.5, 0.5]), v(&[0.5, 0.5])];
        let p1 = StepPath::new(&b1, &vals).unwrap();
        let p2 = StepPath::new(&b2, &vals).unwrap();
        assert!(matches!(
            expected_utility(&mk, &p1, &p1, 0.0),
            Err(Error::NonPositiveWealth(_))
        ));
        assert!(matches!(
            expected_utility(&mk, &p1, &p2, 1.0),
            Err(Error::GridMismatch(_))
        ));
        assert!(matches!(
            StepPath::new(&b1, &vals[..1]),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn piecewise_integral_is_segment_sum() {
        let mk = market(DMatrix::identity(2, 2), 0.0, 1.0);
        let b = [0.0, 0.25, 1.0];
        let pis = [v(&[0.5, 0.5]), v(&[1.0, 0.0])];
        let mus = [v(&[0.1, 0.1]), v(&[0.2, 0.0])];
        let u = expected_utility(
            &mk,
            &StepPath::new(&b, &pis).unwrap(),
            &StepPath::new(&b, &mus).unwrap(),
            1.0,
        )
        .unwrap();
        // 0.25·(0.1 − 0.25) + 0.75·(0.2 − 0.5)
        assert!((u - (0.25 * -0.15 + 0.75 * -0.3)).abs() < 1e-15);
    }

    #[test]
    fn reduced_value_matches_direct_evaluation() {
        for gamma in [0.0, 0.5, -2.0] {
            let mk = market(
                DMatrix::from_row_slice(2, 2, &[0.1, 0.05, 0.05, 0.1]),
                gamma,
                1.0,
            );
            let g = constraint_geometry(&mk).unwrap();
            let mu = v(&[0.02, 0.03]);
            let pi = merton_strategy(&g, &mu, gamma, 1.0);
            let direct = expected_utility_constant(&mk, &pi.pi, &mu, 1.0, 1.0).unwrap();
            let reduced = optimal_value_reduced(&mk, &g, &mu, 1.0, 1.0).unwrap();
            assert!(
                (direct - reduced).abs() < 1e-12 * direct.abs().max(1.0),
                "{gamma}: {direct} {reduced}"
            );
        }
    }

    #[test]
    fn merton_maximizes_on_strategy_grid() {
        for gamma in [0.0, 0.5] {
            let mk = market(
                DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.05, 0.2]),
                gamma,
                1.0,
            );
            let g = constraint_geometry(&mk).unwrap();
            let mu = v(&[0.09, 0.04]);
            let best = merton_strategy(&g, &mu, gamma, 1.0);
            let best_val = expected_utility_constant(&mk, &best.pi, &mu, 1.0, 1.0).unwrap();
            let h = 1.0;
            let (mut arg, mut max) = (0.0, f64::NEG_INFINITY);
            for k in 0..2001 {
                let p = -5.0 + (10.0 + h) * k as f64 / 2000.0;
                let a = Allocation::from_free(&[p], h);
                let val = expected_utility_constant(&mk, &a.pi, &mu, 1.0, 1.0).unwrap();
                if val > max {
                    max = val;
                    arg = p;
                }
            }
            assert!(max <= best_val + 1e-15);
            assert!((arg - best.pi[0]).abs() <= (10.0 + h) / 2000.0);
        }
    }
}
