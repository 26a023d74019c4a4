//! Dense covariance models of the structured noise and the determinant ratio
//! between neighbouring splitting vectors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Covariance of one noise column for the splitting vector `bits` (C = 1).
///
/// Active coordinates form a cycle in index order: variance `2 s1² + s2²` and
/// `-s1²` between cyclic neighbours (`-2 s1²` for a 2-cycle, and a lone active
/// coordinate carries only `s2²`). Inactive coordinates get `2 s1² + s2²`.
pub fn noise_covariance(bits: &[bool], sigma1: f64, sigma2: f64) -> DMatrix<f64> {
    let n = bits.len();
    let s1 = sigma1 * sigma1;
    let s2 = sigma2 * sigma2;
    let mut cov = DMatrix::zeros(n, n);
    let active: Vec<usize> = (0..n).filter(|&i| bits[i]).collect();
    for (i, &b) in bits.iter().enumerate() {
        if !b {
            cov[(i, i)] = 2.0 * s1 + s2;
        }
    }
    let na = active.len();
    match na {
        0 => {}
        1 => cov[(active[0], active[0])] = s2,
        _ => {
            for k in 0..na {
                let i = active[k];
                let j = active[(k + 1) % na];
                cov[(i, i)] = 2.0 * s1 + s2;
                cov[(i, j)] -= s1;
                cov[(j, i)] -= s1;
            }
        }
    }
    cov
}

/// Covariance restricted to an active cycle of length `n_active`.
pub fn active_block_covariance(n_active: usize, sigma1: f64, sigma2: f64) -> DMatrix<f64> {
    noise_covariance(&vec![true; n_active], sigma1, sigma2)
}

pub fn log_det(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("matrix is not positive definite"))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `|Σ2| / |Σ1|`, where `Σ2` is the full `n`-cycle covariance and `Σ1` isolates
/// the first coordinate (inactive) with the remaining `n - 1` on a cycle.
pub fn det_ratio(n: usize, sigma1: f64, sigma2: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::arg("det_ratio needs n >= 3"));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::arg("sigma2 must be positive"));
    }
    let full = active_block_covariance(n, sigma1, sigma2);
    let mut bits = vec![true; n];
    bits[0] = false;
    let split = noise_covariance(&bits, sigma1, sigma2);
    Ok((log_det(&full)? - log_det(&split)?).exp())
}
