use serde::{Deserialize, Serialize};

use super::noising::NoisedResponse;
use super::splitting::CategoricalMatrix;
use crate::boost::split::{beats, gain_from_left};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub score: f64,
    /// Column index into the node's categorical matrix.
    pub candidate: usize,
}

/// Split score of every candidate from the noised products `mᵢᵀ<g>ᵢ`, `mᵢᵀ<h>ᵢ`.
/// Without Hessians the left Hessian is the active-set size.
pub fn candidate_scores(
    resp: &NoisedResponse,
    m: &CategoricalMatrix,
    lambda: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    if resp.l() != m.l() {
        return Err(Error::arg(format!(
            "response has {} candidates, matrix has {}",
            resp.l(),
            m.l()
        )));
    }
    if let Some(h) = &resp.h {
        if h.len() != m.l() {
            return Err(Error::arg(
                "Hessian responses do not match the candidate count",
            ));
        }
    }
    if resp.g.iter().any(|g| g.len() != m.n()) {
        return Err(Error::arg("noised vectors do not match the node size"));
    }
    Ok((0..m.l())
        .map(|i| {
            let col = m.column(i);
            let gl = col.dot(&resp.g[i]);
            let hl = match &resp.h {
                Some(h) => col.dot(&h[i]),
                None => col.n_active() as f64,
            };
            gain_from_left(gl, hl, resp.total_g, resp.total_h, lambda, gamma)
        })
        .collect())
}

/// Highest finite score and its candidate; near-ties keep the lower index.
pub fn pp_evaluate_splits(
    resp: &NoisedResponse,
    m: &CategoricalMatrix,
    lambda: f64,
    gamma: f64,
) -> Result<Option<CandidateScore>> {
    let scores = candidate_scores(resp, m, lambda, gamma)?;
    Ok(best_of(&scores))
}

pub(crate) fn best_of(scores: &[f64]) -> Option<CandidateScore> {
    let mut best: Option<CandidateScore> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| beats(s, b.score)) {
            best = Some(CandidateScore {
                score: s,
                candidate: i,
            });
        }
    }
    best
}
