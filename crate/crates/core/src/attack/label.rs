use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{AttackKind, AttackReport, AttackSetting};
use crate::boost::grad_hess;
use crate::error::{Error, Result};
use crate::protocol::{
    information_noising, noise_calibration, CategoricalMatrix, NoiseMatrix, SplittingVector,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGuess {
    /// Denoised gradient estimate, averaged over the slice.
    pub g_hat: Vec<f64>,
    pub labels: Vec<u8>,
    pub accuracy: f64,
    /// The noise columns span the whole space, so nothing survives projection.
    pub unreliable: bool,
}

/// Removes the component of each released `<g>_i` lying in the span of its own
/// noise matrix, averages the residuals and predicts `y = 1` where the estimate
/// is negative (the logistic gradient is `p - y`).
pub fn ap_label_attack(slice: &[(NoiseMatrix, Vec<f64>)], truth: &[u8]) -> Result<LabelGuess> {
    let n = truth.len();
    if slice.is_empty() || n == 0 {
        return Err(Error::arg(
            "label attack needs at least one release and one instance",
        ));
    }
    let mut g_hat = vec![0.0; n];
    let mut unreliable = false;
    for (b, released) in slice {
        if b.n() != n || released.len() != n {
            return Err(Error::arg(
                "release, noise matrix and labels differ in length",
            ));
        }
        unreliable |= b.w() >= n;
        let basis = DMatrix::from_fn(n, b.w(), |i, k| b.columns[k][i]);
        let y = DVector::from_column_slice(released);
        let coef = basis
            .clone()
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| Error::numeric(format!("least squares failed: {e}")))?;
        let residual = y - basis * coef;
        for (acc, r) in g_hat.iter_mut().zip(residual.iter()) {
            *acc += r;
        }
    }
    let k = slice.len() as f64;
    g_hat.iter_mut().for_each(|g| *g /= k);
    let labels: Vec<u8> = g_hat.iter().map(|&g| u8::from(g < 0.0)).collect();
    let hits = labels.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(LabelGuess {
        g_hat,
        labels,
        accuracy: hits as f64 / n as f64,
        unreliable,
    })
}

/// Repeated label-attack trials on balanced labels at zero margin, where the
/// gradient sign equals the label exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTrialConfig {
    pub n: usize,
    pub n_active: usize,
    pub w: usize,
    /// Candidate releases the attacker sees per trial.
    pub candidates: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Coefficient-sphere radius².
    pub c: f64,
    pub trials: usize,
    pub seed: u64,
    pub eps_ap: Option<f64>,
    pub delta_ap: Option<f64>,
}

pub fn label_trials(cfg: &LabelTrialConfig) -> Result<AttackReport> {
    if cfg.trials == 0 || cfg.candidates == 0 || cfg.w == 0 || cfg.n < 2 {
        return Err(Error::arg(
            "need trials, candidates, noise columns and n >= 2",
        ));
    }
    if cfg.n_active == 0 || cfg.n_active > cfg.n {
        return Err(Error::arg(format!(
            "active-set size {} outside 1..={}",
            cfg.n_active, cfg.n
        )));
    }
    let outcomes: Vec<(f64, bool)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(cfg.seed, "attack-ap", &[t]);
            let mut labels = vec![0u8; cfg.n];
            for i in sample(&mut rng, cfg.n, cfg.n / 2) {
                labels[i] = 1;
            }
            let columns = (0..cfg.candidates)
                .map(|_| {
                    let mut bits = vec![false; cfg.n];
                    for i in sample(&mut rng, cfg.n, cfg.n_active) {
                        bits[i] = true;
                    }
                    SplittingVector {
                        bits,
                        feature: 0,
                        threshold: 0.0,
                    }
                })
                .collect();
            let m = CategoricalMatrix::new(columns)?;
            let noise = noise_calibration(
                &m,
                cfg.sigma1,
                cfg.sigma2,
                cfg.w,
                rng::child_seed(cfg.seed, "attack-ap-noise", &[t]),
            )?;
            let gp = grad_hess(&labels, &vec![0.0; cfg.n])?;
            let resp = information_noising(
                &noise,
                &gp,
                cfg.c,
                rng::child_seed(cfg.seed, "attack-ap-coef", &[t]),
            )?;
            let slice: Vec<(NoiseMatrix, Vec<f64>)> = noise.into_iter().zip(resp.g).collect();
            let guess = ap_label_attack(&slice, &labels)?;
            Ok((guess.accuracy, guess.unreliable))
        })
        .collect::<Result<_>>()?;
    let setting = AttackSetting {
        eps_ap: cfg.eps_ap,
        delta_ap: cfg.delta_ap,
        eps_pp: None,
        delta_pp: None,
        sigma1: cfg.sigma1,
        sigma2: cfg.sigma2,
        c: Some(cfg.c),
        n: cfg.n,
        n_active: cfg.n_active,
        w: cfg.w,
    };
    let unreliable = outcomes.iter().any(|o| o.1);
    let mut report = AttackReport::from_trials(
        AttackKind::LabelInference,
        outcomes.into_iter().map(|o| o.0).collect(),
        0.5,
        setting,
    )?;
    report.unreliable = unreliable;
    Ok(report)
}
