//! Baseline: the active party releases Gaussian-noised gradients and Hessians
//! once per node and the passive party scores its candidates on them directly.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::evaluate::best_of;
use super::party::{NoiseSchedule, PassiveParty};
use crate::boost::beats;
use crate::boost::split::gain_from_left;
use crate::boost::{
    boost, GradPair, HandleTable, LocalSplitFinder, NodeContext, SplitDecision, SplitRule,
    SplitSearch, TrainParams, TreeModel,
};
use crate::data::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::privacy::{mu_logistic, schedule_queries, Budget, Composition, QuerySchedule};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LdpNoise {
    /// Fixed standard deviation, no accounting.
    Fixed { sigma: f64 },
    /// `(eps, delta)` over `T × depth` sequential node releases.
    Calibrated {
        eps: f64,
        delta: f64,
        composition: Composition,
    },
}

/// Gaussian-mechanism scale for a release of `n` values bounded by `mu / 2`:
/// `mu sqrt(n) sqrt(2 ln(1.25 / δ)) / eps`.
pub fn ldp_sigma(eps: f64, delta: f64, n: usize, mu: f64) -> Result<f64> {
    if !(eps > 0.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::arg("LDP baseline needs eps > 0 and 0 < delta < 1"));
    }
    Ok(mu * (n as f64).sqrt() * (2.0 * (1.25 / delta).ln()).sqrt() / eps)
}

#[derive(Debug, Clone)]
pub struct LdpRun {
    pub model: TreeModel,
    pub handles: HandleTable,
    pub schedule: Option<QuerySchedule>,
}

struct LdpSearch<'a> {
    finder: LocalSplitFinder<'a>,
    pp: PassiveParty<'a>,
    noise: LdpNoise,
    per_query: Option<Budget>,
    seed: u64,
    lambda: f64,
    gamma: f64,
    gradient_only: bool,
}

impl SplitSearch for LdpSearch<'_> {
    fn best_split(
        &mut self,
        ctx: &NodeContext<'_>,
        gp: &GradPair,
    ) -> Result<Option<SplitDecision>> {
        let local = self.finder.search(ctx.rows, gp);
        let n = ctx.rows.len();
        let sigma = match (self.noise, self.per_query) {
            (LdpNoise::Fixed { sigma }, _) => sigma,
            (LdpNoise::Calibrated { .. }, Some(q)) => ldp_sigma(q.eps, q.delta, n, mu_logistic())?,
            (LdpNoise::Calibrated { .. }, None) => unreachable!("calibrated runs carry a schedule"),
        };
        let mut rng = rng::stream(self.seed, "ldp-node", &[ctx.tree as u64, ctx.node as u64]);
        let mut noisy = |x: f64| {
            x + sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        };
        let g: Vec<f64> = ctx.rows.iter().map(|&r| noisy(gp.g[r])).collect();
        let h: Option<Vec<f64>> =
            (!self.gradient_only).then(|| ctx.rows.iter().map(|&r| noisy(gp.h[r])).collect());

        let remote = match self.pp.node_matrix(ctx.rows) {
            Some(m) => {
                // the passive party only sees the noisy release, totals included
                let total_g: f64 = g.iter().sum();
                let total_h: f64 = h.as_ref().map_or(n as f64, |h| h.iter().sum());
                let scores: Vec<f64> = m
                    .columns()
                    .iter()
                    .map(|col| {
                        let hl = h.as_ref().map_or(col.n_active() as f64, |h| col.dot(h));
                        gain_from_left(col.dot(&g), hl, total_g, total_h, self.lambda, self.gamma)
                    })
                    .collect();
                best_of(&scores).map(|b| {
                    let col = m.column(b.candidate);
                    let handle = self.pp.register(col.feature, col.threshold);
                    SplitDecision {
                        score: b.score,
                        rule: SplitRule::Remote { handle },
                    }
                })
            }
            None => None,
        };
        let local = local.map(|c| SplitDecision {
            score: c.score,
            rule: SplitRule::Local {
                feature: c.feature,
                threshold: c.threshold,
            },
        });
        Ok(match (local, remote) {
            (Some(l), Some(r)) => Some(if beats(r.score, l.score) { r } else { l }),
            (l, r) => l.or(r),
        })
    }

    fn partition(&self, rule: &SplitRule, rows: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        match *rule {
            SplitRule::Local { feature, threshold } => {
                Ok(self.finder.partition(feature, threshold, rows))
            }
            SplitRule::Remote { handle } => self.pp.partition(handle, rows),
        }
    }
}

pub fn train_ldp_baseline(
    ap: &Dataset,
    pp: &FeatureMatrix,
    params: &TrainParams,
    noise: &LdpNoise,
    seed: u64,
) -> Result<LdpRun> {
    params.validate()?;
    if ap.n() != pp.rows() {
        return Err(Error::arg("party instance counts differ"));
    }
    let schedule = match *noise {
        LdpNoise::Fixed { sigma } => {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::arg("sigma must be finite and non-negative"));
            }
            None
        }
        LdpNoise::Calibrated {
            eps,
            delta,
            composition,
        } => {
            let k = (params.rounds * params.max_depth).max(1);
            Some(schedule_queries(Budget::new(eps, delta), k, composition)?)
        }
    };
    let finder = LocalSplitFinder::new(
        ap.features(),
        params.candidates_per_feature,
        params.lambda,
        params.gamma,
    )?;
    // the handle table is the only part of the passive party used here
    let placeholder = NoiseSchedule::Fixed {
        sigma1: 0.0,
        sigma2: 0.0,
        c: 0.0,
        w: 1,
    };
    let pp_party = PassiveParty::new(
        pp,
        params.candidates_per_feature,
        &placeholder,
        params.lambda,
        params.gamma,
        seed,
        false,
    )?;
    let mut search = LdpSearch {
        finder,
        pp: pp_party,
        noise: *noise,
        per_query: schedule.map(|s| s.per_query),
        seed: rng::child_seed(seed, "ldp", &[]),
        lambda: params.lambda,
        gamma: params.gamma,
        gradient_only: params.gradient_only,
    };
    let clip = schedule.map(|_| mu_logistic() / 2.0);
    let model = boost(&mut search, ap.labels(), params, clip)?;
    Ok(LdpRun {
        model,
        handles: search.pp.handles().clone(),
        schedule,
    })
}
