use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{AttackKind, AttackReport, AttackSetting};
use crate::error::{Error, Result};
use crate::protocol::{sample_noise_column, NoiseMatrix, SplittingVector};
use crate::rng;

/// Largest node size searched exhaustively.
pub const MAX_EXACT_N: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeGuess {
    /// Predicted active indices, ascending.
    pub active: Vec<usize>,
    /// `Σ_j |Σ_{i in S} b_ij|` at the prediction.
    pub statistic: f64,
    pub heuristic: bool,
}

impl AttributeGuess {
    pub fn bits(&self, n: usize) -> Vec<bool> {
        let mut bits = vec![false; n];
        for &i in &self.active {
            bits[i] = true;
        }
        bits
    }

    pub fn bit_match(&self, truth: &[bool]) -> f64 {
        let guess = self.bits(truth.len());
        let hits = guess.iter().zip(truth).filter(|(a, b)| a == b).count();
        hits as f64 / truth.len() as f64
    }
}

/// Guesses the active set of size `n_active` as the subset whose rows of `B`
/// come closest to cancelling. Exact over all subsets when `n <= MAX_EXACT_N`,
/// ties going to the lexicographically first subset; greedy otherwise.
pub fn pp_attribute_attack(b: &NoiseMatrix, n_active: usize) -> Result<AttributeGuess> {
    let n = b.n();
    if b.w() == 0 || n == 0 {
        return Err(Error::arg("empty noise matrix"));
    }
    if n_active == 0 || n_active > n {
        return Err(Error::arg(format!(
            "active-set size {n_active} outside 1..={n}"
        )));
    }
    if n <= MAX_EXACT_N {
        Ok(exhaustive(&b.columns, n, n_active))
    } else {
        Ok(greedy(&b.columns, n, n_active))
    }
}

fn statistic(sums: &[f64]) -> f64 {
    sums.iter().map(|s| s.abs()).sum()
}

struct Search<'a> {
    columns: &'a [Vec<f64>],
    n: usize,
    k: usize,
    chosen: Vec<usize>,
    sums: Vec<f64>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn descend(&mut self, start: usize) {
        if self.chosen.len() == self.k {
            let s = statistic(&self.sums);
            if self.best.as_ref().is_none_or(|(b, _)| s < *b) {
                self.best = Some((s, self.chosen.clone()));
            }
            return;
        }
        let remaining = self.k - self.chosen.len();
        for i in start..=self.n - remaining {
            for (s, col) in self.sums.iter_mut().zip(self.columns) {
                *s += col[i];
            }
            self.chosen.push(i);
            self.descend(i + 1);
            self.chosen.pop();
            for (s, col) in self.sums.iter_mut().zip(self.columns) {
                *s -= col[i];
            }
        }
    }
}

fn exhaustive(columns: &[Vec<f64>], n: usize, k: usize) -> AttributeGuess {
    let mut search = Search {
        columns,
        n,
        k,
        chosen: Vec::with_capacity(k),
        sums: vec![0.0; columns.len()],
        best: None,
    };
    search.descend(0);
    let (_, active) = search.best.expect("at least one subset");
    // Recompute in index order so the reported statistic does not carry add/subtract drift.
    let sums: Vec<f64> = columns
        .iter()
        .map(|c| active.iter().map(|&i| c[i]).sum())
        .collect();
    AttributeGuess {
        statistic: statistic(&sums),
        active,
        heuristic: false,
    }
}

fn greedy(columns: &[Vec<f64>], n: usize, k: usize) -> AttributeGuess {
    let mut taken = vec![false; n];
    let mut sums = vec![0.0; columns.len()];
    for _ in 0..k {
        let mut pick: Option<(f64, usize)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let s: f64 = sums
                .iter()
                .zip(columns)
                .map(|(s, c)| (s + c[i]).abs())
                .sum();
            if pick.is_none_or(|(b, _)| s < b) {
                pick = Some((s, i));
            }
        }
        let (_, i) = pick.expect("fewer picks than free indices");
        taken[i] = true;
        for (s, c) in sums.iter_mut().zip(columns) {
            *s += c[i];
        }
    }
    let active: Vec<usize> = (0..n).filter(|&i| taken[i]).collect();
    AttributeGuess {
        statistic: statistic(&sums),
        active,
        heuristic: true,
    }
}

/// Repeated attribute-attack trials on fresh random splitting vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTrialConfig {
    pub n: usize,
    pub n_active: usize,
    pub w: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub trials: usize,
    pub seed: u64,
    /// Recorded in the report when `sigma2` came from a calibration.
    pub eps_pp: Option<f64>,
    pub delta_pp: Option<f64>,
}

/// Expected bit-match of a uniformly random guess of the right size.
fn chance_level(n: usize, k: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    let overlap = k * k / n;
    (2.0 * overlap + n - 2.0 * k) / n
}

pub fn attribute_trials(cfg: &AttributeTrialConfig) -> Result<AttackReport> {
    if cfg.trials == 0 || cfg.w == 0 {
        return Err(Error::arg("need at least one trial and one noise column"));
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
            let mut rng = rng::stream(cfg.seed, "attack-pp", &[t]);
            let mut bits = vec![false; cfg.n];
            for i in sample(&mut rng, cfg.n, cfg.n_active) {
                bits[i] = true;
            }
            let m = SplittingVector {
                bits,
                feature: 0,
                threshold: 0.0,
            };
            let columns = (0..cfg.w)
                .map(|_| sample_noise_column(&m, cfg.sigma1, cfg.sigma2, &mut rng).total())
                .collect();
            let guess = pp_attribute_attack(
                &NoiseMatrix {
                    candidate: 0,
                    columns,
                },
                cfg.n_active,
            )?;
            Ok((guess.bit_match(&m.bits), guess.heuristic))
        })
        .collect::<Result<_>>()?;
    let setting = AttackSetting {
        eps_ap: None,
        delta_ap: None,
        eps_pp: cfg.eps_pp,
        delta_pp: cfg.delta_pp,
        sigma1: cfg.sigma1,
        sigma2: cfg.sigma2,
        c: None,
        n: cfg.n,
        n_active: cfg.n_active,
        w: cfg.w,
    };
    let heuristic = outcomes.iter().filter(|o| o.1).count();
    let mut report = AttackReport::from_trials(
        AttackKind::AttributeInference,
        outcomes.into_iter().map(|o| o.0).collect(),
        chance_level(cfg.n, cfg.n_active),
        setting,
    )?;
    report.heuristic_trials = heuristic;
    Ok(report)
}
