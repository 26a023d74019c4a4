use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::splitting::{CategoricalMatrix, SplittingVector};
use crate::error::{Error, Result};
use crate::rng;

/// `B_i = [b_i1 … b_iW]` for candidate `i`; each column has the node's length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMatrix {
    pub candidate: usize,
    pub columns: Vec<Vec<f64>>,
}

impl NoiseMatrix {
    pub fn w(&self) -> usize {
        self.columns.len()
    }

    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// The three components of one noise column, kept apart for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParts {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub r: Vec<f64>,
}

impl NoiseParts {
    pub fn total(&self) -> Vec<f64> {
        self.u
            .iter()
            .zip(&self.v)
            .zip(&self.r)
            .map(|((u, v), r)| u + v + r)
            .collect()
    }
}

/// Cyclic differences of `p` written onto the active set: the first active
/// coordinate gets `p_1 - p_last`, the k-th gets `p_k - p_(k-1)`.
pub fn active_noise(m: &SplittingVector, p: &[f64]) -> Result<Vec<f64>> {
    let active = m.active();
    if p.len() != active.len() {
        return Err(Error::arg(format!(
            "{} draws for an active set of {}",
            p.len(),
            active.len()
        )));
    }
    let mut u = vec![0.0; m.len()];
    for (k, &idx) in active.iter().enumerate() {
        let prev = if k == 0 { p[p.len() - 1] } else { p[k - 1] };
        u[idx] = p[k] - prev;
    }
    Ok(u)
}

/// Draws `p` (active), then `q` (inactive), then `r` (all coordinates) from `rng`.
pub fn sample_noise_column<R: Rng + ?Sized>(
    m: &SplittingVector,
    sigma1: f64,
    sigma2: f64,
    rng: &mut R,
) -> NoiseParts {
    let n_active = m.n_active();
    let p: Vec<f64> = (0..n_active)
        .map(|_| sigma1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let u = active_noise(m, &p).expect("draw count matches the active set");
    let inactive_sd = std::f64::consts::SQRT_2 * sigma1;
    let mut v = vec![0.0; m.len()];
    for j in m.inactive() {
        v[j] = inactive_sd * rng.sample::<f64, _>(StandardNormal);
    }
    let r = (0..m.len())
        .map(|_| sigma2 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    NoiseParts { u, v, r }
}

/// One noise matrix per splitting vector. Column `(i, j)` comes from its own
/// stream keyed by `(seed, i, j)`, so the output does not depend on scheduling.
pub fn noise_calibration(
    m: &CategoricalMatrix,
    sigma1: f64,
    sigma2: f64,
    w: usize,
    seed: u64,
) -> Result<Vec<NoiseMatrix>> {
    if !(sigma1 >= 0.0 && sigma1.is_finite() && sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::arg(
            "sigma1 and sigma2 must be finite and non-negative",
        ));
    }
    if w == 0 {
        return Err(Error::arg("W must be at least 1"));
    }
    if m.n() == 0 {
        return Err(Error::arg("splitting vectors must be non-empty"));
    }
    Ok(m.columns()
        .par_iter()
        .enumerate()
        .map(|(i, col)| NoiseMatrix {
            candidate: i,
            columns: (0..w)
                .map(|j| {
                    let mut rng = rng::stream(seed, "noise", &[i as u64, j as u64]);
                    sample_noise_column(col, sigma1, sigma2, &mut rng).total()
                })
                .collect(),
        })
        .collect())
}
