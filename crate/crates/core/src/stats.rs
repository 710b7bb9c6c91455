//! χ² quantiles by inverting the regularized incomplete gamma function.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Quantile `x` with `P(χ²_dof ≤ x) = p`.
pub fn chi2_quantile(dof: usize, p: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::OutOfDomain(
            "chi-square needs at least one degree of freedom".into(),
        ));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfDomain(format!("probability {p} not in (0, 1)")));
    }
    Ok(2.0 * inverse_gamma_lr(dof as f64 / 2.0, p))
}

/// Solves `P(a, x) = p` for `x > 0`.
fn inverse_gamma_lr(a: f64, p: f64) -> f64 {
    let q = 1.0 - p;
    // work on the smaller tail so that the residual keeps full relative precision
    let upper = p > 0.5;
    let residual = |x: f64| -> f64 {
        if x <= 0.0 {
            return if upper { q - 1.0 } else { -p };
        }
        if upper {
            q - gamma_ur(a, x)
        } else {
            gamma_lr(a, x) - p
        }
    };
    let ln_ga = ln_gamma(a);
    let density = |x: f64| ((a - 1.0) * x.ln() - x - ln_ga).exp();

    // residual is increasing in x; bracket the root
    let mut lo = 0.0;
    let mut hi = wilson_hilferty(a, p).max(1e-300);
    while residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = hi;
    for _ in 0..200 {
        let f = residual(x);
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = density(x);
        let mut next = if dens > 0.0 && dens.is_finite() {
            x - f / dens
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = if lo > 0.0 { 0.5 * (lo + hi) } else { hi * 0.5 };
        }
        if (next - x).abs() <= 1e-15 * x {
            return next;
        }
        x = next;
    }
    x
}

/// Starting point for the gamma inversion.
fn wilson_hilferty(a: f64, p: f64) -> f64 {
    let dof = 2.0 * a;
    let z = standard_normal_quantile_approx(p);
    let k = 2.0 / (9.0 * dof);
    let base = 1.0 - k + z * k.sqrt();
    0.5 * dof * base.max(1e-3).powi(3)
}

// Abramowitz–Stegun 26.2.23; only used as a starting point
fn standard_normal_quantile_approx(p: f64) -> f64 {
    let (pp, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
    let t = (-2.0 * pp.ln()).sqrt();
    let num = 2.515517 + 0.802853 * t + 0.010328 * t * t;
    let den = 1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t;
    sign * (t - num / den)
}
