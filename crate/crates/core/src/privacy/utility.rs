//! Upper bound on the deviation of a noised split score from its exact value.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::quadrature::integrate;
use crate::error::{Error, Result};

/// Standard normal CDF, accurate in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityBound {
    /// Unclipped sum of both side bounds, in `[0, 4]`.
    pub value: f64,
    /// `value` clipped to `[0, 1]`.
    pub clipped: f64,
    pub left: f64,
    pub right: f64,
}

/// Bound on `Pr(|X²/Y - c| >= α)` for `X ~ N(mx, κ²)`, `Y ~ N(my, κ²)` and `c = mx² / my`.
fn side_bound(alpha: f64, kappa: f64, mx: f64, my: f64) -> Result<f64> {
    let c = mx * mx / my;
    let beta_hi = c + alpha;
    let beta_lo = c - alpha;
    let integrand = |t: f64| {
        let s_hi = (beta_hi * t).sqrt();
        let s_lo = (beta_lo * t).sqrt();
        // Pr(X² >= beta_hi t)
        let above = normal_cdf((-s_hi + mx) / kappa) + normal_cdf((-s_hi - mx) / kappa);
        // Pr(X² <= beta_lo t)
        let below = normal_cdf((s_lo - mx) / kappa) - normal_cdf((-s_lo - mx) / kappa);
        (above + below) * normal_pdf((t - my) / kappa) / kappa
    };
    // Beyond 12κ the Gaussian weight is below 1e-31.
    let lo = (my - 12.0 * kappa).max(0.0);
    let hi = my + 12.0 * kappa;
    let mut total = 0.0;
    for (a, b) in [(lo, my.max(lo)), (my.max(lo), hi)] {
        if b > a {
            total += integrate(integrand, a, b, 1e-8, 1e-15)?.value;
        }
    }
    Ok(total + normal_cdf(-my / kappa))
}

/// Evaluates `U(α, κ)` for the exact left/right statistics of one candidate.
/// Requires `α <= min(gL²/(hL+λ), gR²/(hR+λ))`, the regime with a closed form.
pub fn utility_bound(
    alpha: f64,
    kappa: f64,
    gl: f64,
    hl: f64,
    gr: f64,
    hr: f64,
    lambda: f64,
) -> Result<UtilityBound> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::arg("alpha must be positive"));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::arg("kappa must be positive"));
    }
    let (my, mw) = (hl + lambda, hr + lambda);
    if !(my > 0.0 && mw > 0.0) {
        return Err(Error::arg("hL + lambda and hR + lambda must be positive"));
    }
    let (cl, cr) = (gl * gl / my, gr * gr / mw);
    if alpha > cl.min(cr) {
        return Err(Error::arg(format!(
            "alpha = {alpha} exceeds min(C_L, C_R) = {}",
            cl.min(cr)
        )));
    }
    let left = side_bound(alpha, kappa, gl, my)?;
    let right = side_bound(alpha, kappa, gr, mw)?;
    let value = left + right;
    Ok(UtilityBound {
        value,
        clipped: value.clamp(0.0, 1.0),
        left,
        right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn cdf_matches_statrs() {
        let n = Normal::standard();
        for &x in &[-30.0, -8.0, -1.5, 0.0, 0.3, 2.0, 9.0] {
            let ours = normal_cdf(x);
            let theirs = n.cdf(x);
            assert!((ours - theirs).abs() <= 1e-15 + 1e-12 * theirs, "{x}");
        }
        assert_eq!(normal_cdf(0.0), 0.5);
    }

    #[test]
    fn vanishes_as_kappa_shrinks() {
        let u = utility_bound(0.3, 1e-4, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(u.value < 1e-3, "{u:?}");
        let mut prev = f64::INFINITY;
        for &k in &[0.2, 0.1, 0.05, 0.02, 0.01] {
            let u = utility_bound(0.3, k, 1.0, 1.0, 1.0, 1.0, 1.0)
                .unwrap()
                .value;
            assert!(u <= prev + 1e-12);
            prev = u;
        }
    }

    #[test]
    fn tail_term_dominates_for_large_kappa() {
        let u = utility_bound(0.01, 1e3, 1.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(normal_cdf(-1.0 / 1e3) > 0.499);
        assert!(u.left >= normal_cdf(-1.0 / 1e3));
        assert!(u.clipped <= 1.0 && u.value <= 4.0);
    }

    #[test]
    fn preconditions() {
        assert!(utility_bound(0.0, 0.1, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(utility_bound(0.3, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(utility_bound(0.6, 0.1, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(utility_bound(0.1, 0.1, 1.0, -2.0, 1.0, 1.0, 1.0).is_err());
    }
}
