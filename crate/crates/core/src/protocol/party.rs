//! The two parties as state machines. Each party only ever sees the messages
//! defined in the transcript module plus its own private inputs.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::evaluate::pp_evaluate_splits;
use super::noise::noise_calibration;
use super::noising::{information_noising_with, NoisedResponse};
use super::splitting::{CategoricalMatrix, SplittingVector};
use super::transcript::{NoiseMessage, ScoreMessage};
use crate::boost::{Candidates, GradPair, HandleTable, LocalSplitFinder, SplitChoice};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::privacy::CalibratedParams;
use crate::rng;

/// Noise parameters for a masked run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseSchedule {
    /// Constant parameters with no privacy accounting.
    Fixed {
        sigma1: f64,
        sigma2: f64,
        c: f64,
        w: usize,
    },
    /// Calibrated parameters; `C` is derived per candidate from its geometry.
    Calibrated(CalibratedParams),
}

impl NoiseSchedule {
    /// Only lossless noise: split decisions match centralized training.
    pub fn lossless() -> Self {
        NoiseSchedule::Fixed {
            sigma1: 1.0,
            sigma2: 0.0,
            c: 1.0,
            w: 2,
        }
    }

    pub fn sigmas(&self) -> (f64, f64) {
        match self {
            NoiseSchedule::Fixed { sigma1, sigma2, .. } => (*sigma1, *sigma2),
            NoiseSchedule::Calibrated(p) => (p.sigma1, p.sigma2),
        }
    }

    pub fn w(&self) -> usize {
        match self {
            NoiseSchedule::Fixed { w, .. } => *w,
            NoiseSchedule::Calibrated(p) => p.w,
        }
    }

    pub fn calibrated(&self) -> Option<&CalibratedParams> {
        match self {
            NoiseSchedule::Calibrated(p) => Some(p),
            NoiseSchedule::Fixed { .. } => None,
        }
    }

    /// Radius² for a candidate with `n_active` of `n` instances on the left.
    pub fn radius(&self, n_active: usize, n: usize) -> Result<f64> {
        match self {
            NoiseSchedule::Fixed { c, .. } => Ok(*c),
            NoiseSchedule::Calibrated(p) => p.c_for(n_active, n - n_active),
        }
    }
}

/// What the passive party keeps about one exchange, enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSecret {
    pub round: usize,
    pub node: usize,
    pub n: usize,
    /// `(feature, threshold, base64 packed bits)` per candidate.
    pub columns: Vec<(usize, f64, String)>,
    pub winner: Option<usize>,
    pub handle: Option<u64>,
}

impl NodeSecret {
    pub fn matrix(&self) -> Result<Option<CategoricalMatrix>> {
        if self.columns.is_empty() {
            return Ok(None);
        }
        let cols = self
            .columns
            .iter()
            .map(|(f, t, bits)| {
                let bytes = B64
                    .decode(bits)
                    .map_err(|e| Error::Transcript(format!("bad packed bits: {e}")))?;
                SplittingVector::unpack(&bytes, self.n, *f, *t)
            })
            .collect::<Result<Vec<_>>>()?;
        CategoricalMatrix::new(cols).map(Some)
    }
}

/// The passive party's private record of a run: handle table and, optionally,
/// every node's categorical matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpPrivateState {
    pub lambda: f64,
    pub gamma: f64,
    pub handles: HandleTable,
    pub nodes: Vec<NodeSecret>,
}

struct Pending {
    round: usize,
    node: usize,
    matrix: Option<CategoricalMatrix>,
}

pub struct PassiveParty<'a> {
    features: &'a FeatureMatrix,
    buckets: Vec<Vec<u32>>,
    candidates: Candidates,
    sigma1: f64,
    sigma2: f64,
    w: usize,
    lambda: f64,
    gamma: f64,
    seed: u64,
    next_handle: u64,
    pending: Option<Pending>,
    state: PpPrivateState,
    keep_secrets: bool,
}

impl<'a> PassiveParty<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        features: &'a FeatureMatrix,
        candidates_per_feature: usize,
        schedule: &NoiseSchedule,
        lambda: f64,
        gamma: f64,
        seed: u64,
        keep_secrets: bool,
    ) -> Result<Self> {
        let candidates = Candidates::quantiles(features, candidates_per_feature)?;
        let buckets = candidates.buckets(features);
        let (sigma1, sigma2) = schedule.sigmas();
        Ok(Self {
            features,
            buckets,
            candidates,
            sigma1,
            sigma2,
            w: schedule.w(),
            lambda,
            gamma,
            seed,
            next_handle: 0,
            pending: None,
            state: PpPrivateState {
                lambda,
                gamma,
                ..PpPrivateState::default()
            },
            keep_secrets,
        })
    }

    pub fn candidates(&self) -> &Candidates {
        &self.candidates
    }

    /// Splitting vectors of the candidates that actually split this node. A
    /// candidate is dropped when a child would be empty or when it induces the
    /// same partition as the previous candidate of its feature.
    pub fn node_matrix(&self, rows: &[usize]) -> Option<CategoricalMatrix> {
        let mut cols = Vec::new();
        let mut counts = Vec::new();
        for (f, ts) in self.candidates.per_feature.iter().enumerate() {
            let bucket = &self.buckets[f];
            counts.clear();
            counts.resize(ts.len() + 1, 0usize);
            for &r in rows {
                counts[bucket[r] as usize] += 1;
            }
            let mut n_left = 0;
            for (k, &t) in ts.iter().enumerate() {
                n_left += counts[k];
                if (k > 0 && counts[k] == 0) || n_left == 0 || n_left == rows.len() {
                    continue;
                }
                let bits = rows.iter().map(|&r| bucket[r] as usize <= k).collect();
                cols.push(SplittingVector {
                    bits,
                    feature: f,
                    threshold: t,
                });
            }
        }
        CategoricalMatrix::new(cols).ok()
    }

    /// Step S2: noise matrices for the node's candidates.
    pub fn propose(&mut self, round: usize, node: usize, rows: &[usize]) -> Result<NoiseMessage> {
        let matrix = self.node_matrix(rows);
        let msg = match &matrix {
            Some(m) => {
                let seed = rng::child_seed(self.seed, "pp-node", &[round as u64, node as u64]);
                NoiseMessage {
                    matrices: noise_calibration(m, self.sigma1, self.sigma2, self.w, seed)?,
                    n_active: m.columns().iter().map(SplittingVector::n_active).collect(),
                }
            }
            None => NoiseMessage {
                matrices: Vec::new(),
                n_active: Vec::new(),
            },
        };
        self.pending = Some(Pending {
            round,
            node,
            matrix,
        });
        Ok(msg)
    }

    /// Step S4 on the passive side: score every candidate and reveal the best.
    pub fn evaluate(&mut self, resp: &NoisedResponse) -> Result<ScoreMessage> {
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::Transcript("response without a pending noise message".into()))?;
        let (best, n, columns) = match &pending.matrix {
            Some(m) => {
                let cols = if self.keep_secrets {
                    m.columns()
                        .iter()
                        .map(|c| (c.feature, c.threshold, B64.encode(c.pack())))
                        .collect()
                } else {
                    Vec::new()
                };
                (
                    pp_evaluate_splits(resp, m, self.lambda, self.gamma)?,
                    m.n(),
                    cols,
                )
            }
            None => {
                if resp.l() != 0 {
                    return Err(Error::Transcript(
                        "response carries candidates the node never had".into(),
                    ));
                }
                (None, 0, Vec::new())
            }
        };
        let msg = match (best, &pending.matrix) {
            (Some(b), Some(m)) => {
                let col = m.column(b.candidate);
                let handle = self.register(col.feature, col.threshold);
                ScoreMessage {
                    score: Some(b.score),
                    handle: Some(handle),
                }
            }
            _ => ScoreMessage {
                score: None,
                handle: None,
            },
        };
        if self.keep_secrets {
            self.state.nodes.push(NodeSecret {
                round: pending.round,
                node: pending.node,
                n,
                columns,
                winner: best.map(|b| b.candidate),
                handle: msg.handle,
            });
        }
        Ok(msg)
    }

    /// Issues a fresh opaque handle for `(feature, threshold)`.
    pub fn register(&mut self, feature: usize, threshold: f64) -> u64 {
        let h = self.next_handle;
        self.next_handle += 1;
        self.state.handles.entries.insert(h, (feature, threshold));
        h
    }

    /// Applies a revealed split to the node's instances.
    pub fn partition(&self, handle: u64, rows: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        let (f, t) = self.state.handles.resolve(handle)?;
        Ok(rows.iter().partition(|&&r| self.features.get(r, f) <= t))
    }

    pub fn handles(&self) -> &HandleTable {
        &self.state.handles
    }

    pub fn into_state(self) -> PpPrivateState {
        self.state
    }
}

pub struct ActiveParty<'a> {
    finder: LocalSplitFinder<'a>,
    schedule: NoiseSchedule,
    seed: u64,
    gradient_only: bool,
}

impl<'a> ActiveParty<'a> {
    pub fn new(
        finder: LocalSplitFinder<'a>,
        schedule: NoiseSchedule,
        seed: u64,
        gradient_only: bool,
    ) -> Self {
        Self {
            finder,
            schedule,
            seed,
            gradient_only,
        }
    }

    pub fn finder(&self) -> &LocalSplitFinder<'a> {
        &self.finder
    }

    /// Noise-free best split over the active party's own features.
    pub fn local_best(&self, rows: &[usize], gp: &GradPair) -> Option<SplitChoice> {
        self.finder.search(rows, gp)
    }

    /// Step S3: perturb the node's gradients with the received noise.
    pub fn respond(
        &self,
        round: usize,
        node: usize,
        msg: &NoiseMessage,
        local: &GradPair,
    ) -> Result<NoisedResponse> {
        if msg.n_active.len() != msg.matrices.len() {
            return Err(Error::Transcript(
                "noise message lists sizes for a different candidate count".into(),
            ));
        }
        let n = local.len();
        let radii = msg
            .n_active
            .iter()
            .map(|&na| {
                if na > n {
                    return Err(Error::Transcript(format!(
                        "active set of {na} exceeds node size {n}"
                    )));
                }
                self.schedule.radius(na, n)
            })
            .collect::<Result<Vec<_>>>()?;
        let seed = rng::child_seed(self.seed, "ap-node", &[round as u64, node as u64]);
        information_noising_with(&msg.matrices, local, &radii, seed, self.gradient_only)
    }
}
