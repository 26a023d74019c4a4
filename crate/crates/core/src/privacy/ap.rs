//! Active-party local DP calibration.

use crate::error::{Error, Result};

/// Uniform bound on logistic-loss derivatives: `|g|, |h| <= mu / 2` with `mu = 2e / (e + 1)`.
pub fn mu_logistic() -> f64 {
    let e = std::f64::consts::E;
    2.0 * e / (e + 1.0)
}

/// Largest admissible privacy-loss variance `2(eps - 2 ln δ - 2 sqrt(ln δ (ln δ - eps)))`.
///
/// Evaluated as `2 eps^2 / (eps + 2L + 2 sqrt(L (L + eps)))` with `L = -ln δ`, which is the
/// same quantity without the catastrophic cancellation of the direct form.
pub fn ap_sensitivity_budget(eps: f64, delta: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::arg(format!(
            "eps_AP must be positive and finite, got {eps}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::arg(format!(
            "delta_AP must lie in (0, 1), got {delta}"
        )));
    }
    let l = -delta.ln();
    Ok(2.0 * eps * eps / (eps + 2.0 * l + 2.0 * (l * (l + eps)).sqrt()))
}

/// Left-hand side of the active-party condition:
/// `n_I mu^2 / (C (2 s1^2 + s2^2)) + n_A mu^2 / (C s2^2)`.
pub fn ap_condition(
    n_active: usize,
    n_inactive: usize,
    mu: f64,
    sigma1: f64,
    sigma2: f64,
    c: f64,
) -> f64 {
    let mu2 = mu * mu;
    n_inactive as f64 * mu2 / (c * (2.0 * sigma1 * sigma1 + sigma2 * sigma2))
        + n_active as f64 * mu2 / (c * sigma2 * sigma2)
}

/// Smallest coefficient-sphere radius² `C` that makes a release with this
/// active/inactive geometry `(eps, delta)`-LDP.
pub fn calibrate_c(
    eps: f64,
    delta: f64,
    n_active: usize,
    n_inactive: usize,
    mu: f64,
    sigma1: f64,
    sigma2: f64,
) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::calibration("sigma2 = 0 requires an infinite C"));
    }
    if !(mu > 0.0 && sigma1 >= 0.0) {
        return Err(Error::arg("mu must be positive and sigma1 non-negative"));
    }
    let budget = ap_sensitivity_budget(eps, delta)?;
    let mu2 = mu * mu;
    let need = n_inactive as f64 * mu2 / (2.0 * sigma1 * sigma1 + sigma2 * sigma2)
        + n_active as f64 * mu2 / (sigma2 * sigma2);
    Ok(need / budget)
}
