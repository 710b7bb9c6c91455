//! Closed-form worst-case drift over an ellipsoid and the robust strategy,
//! together with numerical certificates (saddle inequalities, brute-force
//! minimax oracles on d = 2).
//!
//! With `Γ = ττᵀ`, eigenpairs `(λᵢ, vᵢ)` of `τᵀAτ` (`λ₁ = 0`, `v₁ ∝ τ⁻¹1`)
//! and `n₁ = ‖τ⁻¹1‖`, the worst-case drift is
//!
//! ```text
//! μ*(ψ) = ν − τ Σᵢ (λᵢ/(1−γ) + h/(ψ n₁))⁻¹ ⟨hτᵀc + λᵢ/(1−γ) τ⁻¹ν, vᵢ⟩ vᵢ
//! ```
//!
//! where `ψ ∈ (0, κ]` is fixed by `‖τ⁻¹(μ*−ν)‖ = κ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::ellipsoid::Ellipsoid;
use crate::error::{Error, Result};
use crate::linalg;
use crate::market::ValidatedMarket;
use crate::merton::{expected_utility_constant, merton_strategy, Allocation, ConstraintGeometry};
use crate::rng;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const KERNEL_TOLERANCE: f64 = 1e-10;
pub const PSI_MAX_ITER: usize = 200;
pub const PSI_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    /// Ascending, `lambdas[0] = 0` exactly.
    pub lambdas: Vec<f64>,
    /// Orthonormal; `vectors[0] = τ⁻¹1/‖τ⁻¹1‖`.
    pub vectors: Vec<DVector<f64>>,
    /// `‖τ⁻¹1‖`
    pub norm1: f64,
}

#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub mu_star: DVector<f64>,
    pub pi_star: Allocation,
    pub psi: f64,
    /// `E_{μ*}[U_γ(X_T^{π*})]` over the full horizon from `x₀`.
    pub value: f64,
    pub spectral: SpectralData,
}

impl RobustSolution {
    /// The robust strategy written as `−(h/(ψ n₁)) Γ⁻¹(μ*−ν)`.
    pub fn dual_strategy(&self, k: &Ellipsoid, h: f64) -> Result<DVector<f64>> {
        let chol = nalgebra::Cholesky::new(k.gamma.clone())
            .ok_or_else(|| Error::FactorizationFailed("Gamma is not positive definite".into()))?;
        let scale = -h / (self.psi * self.spectral.norm1);
        Ok(chol.solve(&(&self.mu_star - &k.nu)) * scale)
    }

    /// `‖τ⁻¹(μ*−ν)‖/κ − 1`
    pub fn boundary_residual(&self, k: &Ellipsoid) -> f64 {
        k.radius_ratio(&self.mu_star) - 1.0
    }
}

pub fn eigensystem(tau: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<SpectralData> {
    let d = tau.nrows();
    let tau_inv = tau
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::EigenFailure("tau is singular".into()))?;
    let m = linalg::symmetrize(&(tau.transpose() * a * tau));
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenFailure("symmetric eigen iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let largest = *lambdas.last().unwrap();
    if !(largest > 0.0) {
        return Err(Error::EigenFailure(
            "tauᵀ A tau has no positive eigenvalue".into(),
        ));
    }
    if lambdas[0].abs() >= KERNEL_TOLERANCE * largest {
        return Err(Error::EigenFailure(format!(
            "smallest eigenvalue {:e} is not a numerical zero",
            lambdas[0]
        )));
    }
    lambdas[0] = 0.0;
    if d > 1 && !(lambdas[1] > KERNEL_TOLERANCE * largest) {
        return Err(Error::EigenFailure(format!(
            "second eigenvalue {:e} is numerically zero; tauᵀ A tau has a kernel beyond tau⁻¹1",
            lambdas[1]
        )));
    }

    let kernel = &tau_inv * linalg::ones(d);
    let norm1 = kernel.norm();
    let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(d);
    vectors.push(kernel / norm1);
    for &i in order.iter().skip(1) {
        let mut v = eig.eigenvectors.column(i).into_owned();
        for u in &vectors {
            let proj = u.dot(&v);
            v -= u * proj;
        }
        let n = v.norm();
        if !(n > 0.5) {
            return Err(Error::EigenFailure(
                "eigenvectors are not orthogonal to the kernel".into(),
            ));
        }
        vectors.push(v / n);
    }
    Ok(SpectralData {
        lambdas,
        vectors,
        norm1,
    })
}

/// Coefficients `⟨hτᵀc + λᵢ/(1−γ)τ⁻¹ν, vᵢ⟩`.
fn projections(
    spectral: &SpectralData,
    nu: &DVector<f64>,
    tau: &DMatrix<f64>,
    c: &DVector<f64>,
    gamma: f64,
    h: f64,
) -> Result<Vec<f64>> {
    let tau_inv = tau
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::EigenFailure("tau is singular".into()))?;
    let base = tau.transpose() * c * h;
    let white_nu = tau_inv * nu;
    Ok(spectral
        .lambdas
        .iter()
        .zip(&spectral.vectors)
        .map(|(&l, v)| (&base + &white_nu * (l / (1.0 - gamma))).dot(v))
        .collect())
}

fn weight(lambda: f64, psi: f64, norm1: f64, gamma: f64, h: f64) -> f64 {
    1.0 / (lambda / (1.0 - gamma) + h / (psi * norm1))
}

/// `μ*(ψ)` for a given scalar `ψ`.
pub fn mu_star_for_psi(
    spectral: &SpectralData,
    k: &Ellipsoid,
    c: &DVector<f64>,
    gamma: f64,
    h: f64,
    psi: f64,
) -> Result<DVector<f64>> {
    let b = projections(spectral, &k.nu, &k.tau, c, gamma, h)?;
    let mut sum = DVector::zeros(k.dim());
    for ((&l, v), bi) in spectral.lambdas.iter().zip(&spectral.vectors).zip(&b) {
        sum += v * (weight(l, psi, spectral.norm1, gamma, h) * bi);
    }
    Ok(&k.nu - &k.tau * sum)
}

/// Bisection for `ψ ∈ (0, κ]` with `‖τ⁻¹(μ*(ψ)−ν)‖ = κ`.
pub fn solve_psi(
    spectral: &SpectralData,
    nu: &DVector<f64>,
    tau: &DMatrix<f64>,
    c: &DVector<f64>,
    gamma: f64,
    h: f64,
    kappa: f64,
) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::OutOfDomain(format!("kappa = {kappa} must be > 0")));
    }
    if !(h > 0.0) {
        return Err(Error::OutOfDomain(format!("h = {h} must be > 0")));
    }
    let b = projections(spectral, nu, tau, c, gamma, h)?;
    // vᵢ orthonormal: ‖τ⁻¹(μ*−ν)‖² = Σ wᵢ(ψ)² bᵢ²
    let g = |psi: f64| -> f64 {
        spectral
            .lambdas
            .iter()
            .zip(&b)
            .map(|(&l, bi)| {
                let w = weight(l, psi, spectral.norm1, gamma, h) * bi;
                w * w
            })
            .sum::<f64>()
            .sqrt()
            - kappa
    };
    let mut lo = kappa * 1e-12;
    let mut hi = kappa;
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_hi.abs() <= PSI_REL_TOL * kappa {
        return Ok(hi);
    }
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(Error::NoBracket { lo, hi, g_lo, g_hi });
    }
    for _ in 0..PSI_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Worst-case drift `μ*` over `K`, robust strategy `π*` and the saddle value.
pub fn worst_case_drift(
    k: &Ellipsoid,
    geom: &ConstraintGeometry,
    market: &ValidatedMarket,
) -> Result<RobustSolution> {
    let gamma = market.gamma();
    let h = market.h();
    let spectral = eigensystem(&k.tau, &geom.a)?;
    let psi = solve_psi(&spectral, &k.nu, &k.tau, &geom.c, gamma, h, k.kappa)?;
    let mu_star = mu_star_for_psi(&spectral, k, &geom.c, gamma, h, psi)?;
    let pi_star = merton_strategy(geom, &mu_star, gamma, h);
    let value =
        expected_utility_constant(market, &pi_star.pi, &mu_star, market.horizon(), market.x0())?;
    Ok(RobustSolution {
        mu_star,
        pi_star,
        psi,
        value,
        spectral,
    })
}

/// `argmin_{μ∈K} πᵀμ = ν − κΓπ/√(πᵀΓπ)`.
pub fn linear_minimizer(pi: &DVector<f64>, k: &Ellipsoid) -> Result<DVector<f64>> {
    let g_pi = &k.gamma * pi;
    let quad = pi.dot(&g_pi);
    if !(quad > 0.0) {
        return Err(Error::ZeroStrategy);
    }
    Ok(&k.nu - g_pi * (k.kappa / quad.sqrt()))
}

#[derive(Debug, Clone)]
pub struct SaddleReport {
    pub n_samples: usize,
    pub value: f64,
    /// Largest `max(E_{μ*}[U(π)] − v, v − E_μ[U(π*)], 0)` observed.
    pub max_violation: f64,
    pub worst_pi: DVector<f64>,
    pub worst_mu: DVector<f64>,
    /// Smallest slack `v − E_{μ*}[U(π)]` over sampled strategies.
    pub min_strategy_gap: f64,
    /// Smallest slack `E_μ[U(π*)] − v` over sampled drifts.
    pub min_drift_gap: f64,
}

/// Uniform draw from the ellipsoid.
pub fn sample_in_ellipsoid<R: Rng + ?Sized>(k: &Ellipsoid, rng: &mut R) -> DVector<f64> {
    let d = k.dim();
    let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let radius = rng.random::<f64>().powf(1.0 / d as f64);
    &k.nu + &k.tau * (dir.normalize() * (k.kappa * radius))
}

/// Constrained strategy with free coordinates uniform on `[−2h, 2h]`.
pub fn sample_strategy<R: Rng + ?Sized>(d: usize, h: f64, rng: &mut R) -> Allocation {
    let free: Vec<f64> = (0..d - 1)
        .map(|_| rng.random_range(-2.0 * h..=2.0 * h))
        .collect();
    Allocation::from_free(&free, h)
}

/// Tolerance applied to saddle inequalities on unit-scale values.
pub const SADDLE_TOLERANCE: f64 = 1e-9;

pub fn saddle_check(
    solution: &RobustSolution,
    k: &Ellipsoid,
    geom: &ConstraintGeometry,
    market: &ValidatedMarket,
    n_samples: usize,
    seed: u64,
) -> Result<SaddleReport> {
    let _ = geom;
    if n_samples == 0 {
        return Err(Error::OutOfDomain(
            "saddle check needs at least one sample".into(),
        ));
    }
    let horizon = market.horizon();
    let x0 = market.x0();
    let value =
        expected_utility_constant(market, &solution.pi_star.pi, &solution.mu_star, horizon, x0)?;
    type Sample = (f64, f64, DVector<f64>, DVector<f64>);
    let samples: Vec<Result<Sample>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(seed, &[j]);
            let pi = sample_strategy(market.d(), market.h(), &mut r);
            let mu = sample_in_ellipsoid(k, &mut r);
            let left = expected_utility_constant(market, &pi.pi, &solution.mu_star, horizon, x0)?;
            let right = expected_utility_constant(market, &solution.pi_star.pi, &mu, horizon, x0)?;
            Ok((value - left, right - value, pi.pi, mu))
        })
        .collect();
    let mut report = SaddleReport {
        n_samples,
        value,
        max_violation: 0.0,
        worst_pi: solution.pi_star.pi.clone(),
        worst_mu: solution.mu_star.clone(),
        min_strategy_gap: f64::INFINITY,
        min_drift_gap: f64::INFINITY,
    };
    for s in samples {
        let (gap_pi, gap_mu, pi, mu) = s?;
        report.min_strategy_gap = report.min_strategy_gap.min(gap_pi);
        report.min_drift_gap = report.min_drift_gap.min(gap_mu);
        let violation = (-gap_pi).max(-gap_mu).max(0.0);
        if violation > report.max_violation {
            report.max_violation = violation;
            report.worst_pi = pi;
            report.worst_mu = mu;
        }
    }
    if report.max_violation > SADDLE_TOLERANCE * value.abs().max(1.0) {
        return Err(Error::SaddleViolation {
            violation: report.max_violation,
            pi: report.worst_pi.iter().copied().collect(),
            mu: report.worst_mu.iter().copied().collect(),
        });
    }
    Ok(report)
}

/// How the oracle computes `sup_π E_μ[U(X^π)]` for each boundary drift.
#[derive(Debug, Clone, Copy)]
pub enum InnerSup {
    /// Constrained Merton strategy.
    ClosedForm,
    /// Grid over `π = (p, h − p)` with `p ∈ [lo, hi]`.
    Grid { n_strategy: usize, lo: f64, hi: f64 },
}

fn boundary_drift(k: &Ellipsoid, theta: f64) -> DVector<f64> {
    let u = DVector::from_column_slice(&[theta.cos(), theta.sin()]);
    &k.nu + &k.tau * u * k.kappa
}

fn grid_point(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if n <= 1 {
        0.5 * (lo + hi)
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Brute-force `inf_{μ∈∂K} sup_π E_μ[U(X^π)]` for `d = 2`: the ellipse
/// boundary is scanned at `n_angle` angles, then the best angle is polished
/// by golden-section search within one grid step.
pub fn brute_force_oracle(
    k: &Ellipsoid,
    geom: &ConstraintGeometry,
    market: &ValidatedMarket,
    n_angle: usize,
    inner: InnerSup,
) -> Result<(DVector<f64>, f64)> {
    if market.d() != 2 || k.dim() != 2 {
        return Err(Error::UnsupportedDimension(market.d()));
    }
    if n_angle < 3 {
        return Err(Error::OutOfDomain("oracle needs at least 3 angles".into()));
    }
    let (gamma, h, horizon, x0) = (market.gamma(), market.h(), market.horizon(), market.x0());
    let inner_value = |mu: &DVector<f64>| -> f64 {
        match inner {
            InnerSup::ClosedForm => {
                let pi = merton_strategy(geom, mu, gamma, h);
                expected_utility_constant(market, &pi.pi, mu, horizon, x0).unwrap_or(f64::NAN)
            }
            InnerSup::Grid { n_strategy, lo, hi } => (0..n_strategy.max(1))
                .map(|i| {
                    let a = Allocation::from_free(&[grid_point(lo, hi, n_strategy, i)], h);
                    expected_utility_constant(market, &a.pi, mu, horizon, x0).unwrap_or(f64::NAN)
                })
                .fold(f64::NEG_INFINITY, f64::max),
        }
    };
    let step = std::f64::consts::TAU / n_angle as f64;
    let values: Vec<f64> = (0..n_angle)
        .into_par_iter()
        .map(|j| inner_value(&boundary_drift(k, step * j as f64)))
        .collect();
    let (best, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("n_angle >= 3");
    let center = step * best as f64;
    let (theta, value) = golden_min(center - step, center + step, |t| {
        inner_value(&boundary_drift(k, t))
    });
    let grid_value = values[best];
    if grid_value < value {
        return Ok((boundary_drift(k, center), grid_value));
    }
    Ok((boundary_drift(k, theta), value))
}

/// Brute-force `sup_π inf_{μ∈∂K} E_μ[U(X^π)]` for `d = 2` over strategies
/// `(p, h − p)`, `p` on an `n_strategy` grid in `[lo, hi]`, and `n_angle`
/// boundary drifts. Returns the maximizing strategy and its value.
pub fn sup_inf_oracle(
    k: &Ellipsoid,
    market: &ValidatedMarket,
    n_angle: usize,
    n_strategy: usize,
    lo: f64,
    hi: f64,
) -> Result<(Allocation, f64)> {
    if market.d() != 2 || k.dim() != 2 {
        return Err(Error::UnsupportedDimension(market.d()));
    }
    let (h, horizon, x0) = (market.h(), market.horizon(), market.x0());
    let boundary: Vec<DVector<f64>> = (0..n_angle)
        .map(|j| boundary_drift(k, std::f64::consts::TAU * j as f64 / n_angle as f64))
        .collect();
    let worst = |p: f64| -> f64 {
        let a = Allocation::from_free(&[p], h);
        boundary
            .iter()
            .map(|mu| expected_utility_constant(market, &a.pi, mu, horizon, x0).unwrap_or(f64::NAN))
            .fold(f64::INFINITY, f64::min)
    };
    let values: Vec<f64> = (0..n_strategy.max(1))
        .into_par_iter()
        .map(|i| worst(grid_point(lo, hi, n_strategy, i)))
        .collect();
    let (best, v) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty strategy grid");
    Ok((
        Allocation::from_free(&[grid_point(lo, hi, n_strategy, best)], h),
        *v,
    ))
}
