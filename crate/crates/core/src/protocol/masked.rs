//! Masked training: every node runs one noise/response/score exchange.

use serde::{Deserialize, Serialize};

use super::evaluate::pp_evaluate_splits;
use super::noising::NoisedResponse;
use super::party::{ActiveParty, NoiseSchedule, PassiveParty, PpPrivateState};
use super::transcript::{
    Direction, MessageKind, NoiseMessage, PayloadMode, ScoreMessage, Transcript,
};
use crate::boost::beats;
use crate::boost::{
    boost, Candidates, GradPair, HandleTable, LocalSplitFinder, NodeContext, SplitDecision,
    SplitRule, SplitSearch, TrainParams, TreeModel,
};
use crate::data::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::privacy::{calibrate, mu_logistic, Accountant, Budget, PrivacyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaskedOptions {
    pub seed: u64,
    pub payloads: PayloadMode,
    /// Keep every node's categorical matrix so the run can be replayed.
    pub keep_pp_state: bool,
}

#[derive(Debug, Clone)]
pub struct MaskedRun {
    pub model: TreeModel,
    pub handles: HandleTable,
    pub transcript: Transcript,
    pub status: TrainStatus,
    pub pp_state: PpPrivateState,
    /// Composed active-party spend; `None` without accounting.
    pub spent: Option<Budget>,
}

struct MaskedSearch<'a> {
    ap: ActiveParty<'a>,
    pp: PassiveParty<'a>,
    transcript: Transcript,
    /// Accountant and the units one tree level consumes.
    accountant: Option<(Accountant, usize)>,
    max_depth: usize,
    exhausted: bool,
}

impl SplitSearch for MaskedSearch<'_> {
    fn best_split(
        &mut self,
        ctx: &NodeContext<'_>,
        gp: &GradPair,
    ) -> Result<Option<SplitDecision>> {
        let local = self.ap.local_best(ctx.rows, gp);
        let (round, node) = (ctx.tree, ctx.node);

        let noise = self.pp.propose(round, node, ctx.rows)?;
        self.transcript
            .push(round, node, Direction::PpToAp, MessageKind::Noise, &noise)?;
        let response = self.ap.respond(round, node, &noise, &gp.gather(ctx.rows))?;
        self.transcript.push(
            round,
            node,
            Direction::ApToPp,
            MessageKind::Response,
            &response,
        )?;
        let score = self.pp.evaluate(&response)?;
        self.transcript
            .push(round, node, Direction::PpToAp, MessageKind::Score, &score)?;

        let local = local.map(|c| SplitDecision {
            score: c.score,
            rule: SplitRule::Local {
                feature: c.feature,
                threshold: c.threshold,
            },
        });
        let remote = match (score.score, score.handle) {
            (Some(s), Some(handle)) => Some(SplitDecision {
                score: s,
                rule: SplitRule::Remote { handle },
            }),
            _ => None,
        };
        // the active party keeps its own split on ties
        Ok(match (local, remote) {
            (Some(l), Some(r)) => Some(if beats(r.score, l.score) { r } else { l }),
            (l, r) => l.or(r),
        })
    }

    fn partition(&self, rule: &SplitRule, rows: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        match *rule {
            SplitRule::Local { feature, threshold } => {
                Ok(self.ap.finder().partition(feature, threshold, rows))
            }
            SplitRule::Remote { handle } => self.pp.partition(handle, rows),
        }
    }

    fn begin_tree(&mut self, _tree: usize) -> Result<bool> {
        if let Some((acc, units)) = &self.accountant {
            if acc.remaining() < units * self.max_depth {
                self.exhausted = true;
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn begin_level(&mut self, _tree: usize, _depth: usize) -> Result<bool> {
        if let Some((acc, units)) = &mut self.accountant {
            if !acc.try_spend(*units) {
                self.exhausted = true;
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn check_alignment(ap: &Dataset, pp: &FeatureMatrix) -> Result<()> {
    if ap.n() != pp.rows() {
        return Err(Error::arg(format!(
            "active party has {} instances, passive party {}",
            ap.n(),
            pp.rows()
        )));
    }
    Ok(())
}

/// Calibrates noise for a masked run over these passive features.
pub fn calibrate_for(
    pp: &FeatureMatrix,
    params: &TrainParams,
    config: &PrivacyConfig,
    seed: u64,
) -> Result<NoiseSchedule> {
    let candidates = Candidates::quantiles(pp, params.candidates_per_feature)?.total();
    Ok(NoiseSchedule::Calibrated(calibrate(
        config,
        pp.rows(),
        candidates,
        seed,
    )?))
}

/// Trains with the masked protocol. Under a calibrated schedule gradients are
/// clipped to `±mu/2` so the sensitivity bound holds, and training stops with
/// [`TrainStatus::BudgetExhausted`] once a further level would overspend.
pub fn train_masked(
    ap: &Dataset,
    pp: &FeatureMatrix,
    params: &TrainParams,
    schedule: &NoiseSchedule,
    options: &MaskedOptions,
) -> Result<MaskedRun> {
    params.validate()?;
    check_alignment(ap, pp)?;
    let finder = LocalSplitFinder::new(
        ap.features(),
        params.candidates_per_feature,
        params.lambda,
        params.gamma,
    )?;
    let party_ap = ActiveParty::new(
        finder,
        schedule.clone(),
        crate::rng::child_seed(options.seed, "ap", &[]),
        params.gradient_only,
    );
    let party_pp = PassiveParty::new(
        pp,
        params.candidates_per_feature,
        schedule,
        params.lambda,
        params.gamma,
        crate::rng::child_seed(options.seed, "pp", &[]),
        options.keep_pp_state,
    )?;
    let accountant = schedule
        .calibrated()
        .map(|p| (Accountant::new(p.schedule.ap), p.ap_units_per_level));
    let clip = schedule.calibrated().map(|_| mu_logistic() / 2.0);
    let mut search = MaskedSearch {
        ap: party_ap,
        pp: party_pp,
        transcript: Transcript::new(options.payloads),
        accountant,
        max_depth: params.max_depth,
        exhausted: false,
    };

    let model = boost(&mut search, ap.labels(), params, clip)?;
    let status = if search.exhausted {
        TrainStatus::BudgetExhausted
    } else {
        TrainStatus::Completed
    };
    let spent = search
        .accountant
        .as_ref()
        .map(|(a, _)| a.spent())
        .transpose()?;
    let handles = search.pp.handles().clone();
    Ok(MaskedRun {
        model,
        handles,
        transcript: search.transcript,
        status,
        pp_state: search.pp.into_state(),
        spent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub exchanges: usize,
    pub verified: usize,
}

/// Re-runs the passive party's evaluation on every recorded response and checks
/// that it reproduces the recorded score and handle bit for bit.
pub fn replay(transcript: &Transcript, state: &PpPrivateState) -> Result<ReplayReport> {
    transcript.check_alternation()?;
    let mut verified = 0;
    for chunk in transcript.records.chunks(3) {
        let (round, node) = (chunk[0].round, chunk[0].node);
        let secret = state
            .nodes
            .iter()
            .find(|s| s.round == round && s.node == node)
            .ok_or_else(|| {
                Error::Transcript(format!(
                    "no passive-party record for round {round} node {node}"
                ))
            })?;
        let _noise: NoiseMessage = chunk[0].decode()?;
        let response: NoisedResponse = chunk[1].decode()?;
        let recorded: ScoreMessage = chunk[2].decode()?;
        let best = match secret.matrix()? {
            Some(m) => pp_evaluate_splits(&response, &m, state.lambda, state.gamma)?,
            None => None,
        };
        let same_score = match (best, recorded.score) {
            (Some(b), Some(s)) => {
                b.score.to_bits() == s.to_bits() && Some(b.candidate) == secret.winner
            }
            (None, None) => true,
            _ => false,
        };
        if !same_score || recorded.handle != secret.handle {
            return Err(Error::Transcript(format!(
                "replay diverges at round {round} node {node}"
            )));
        }
        verified += 1;
    }
    Ok(ReplayReport {
        exchanges: transcript.len() / 3,
        verified,
    })
}
