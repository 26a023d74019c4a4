//! The masked split-finding protocol between the active and passive party.

mod evaluate;
mod ldp;
mod masked;
mod noise;
mod noising;
mod party;
mod splitting;
mod transcript;

pub use crate::boost::{beats, TIE_TOLERANCE};
pub use evaluate::{candidate_scores, pp_evaluate_splits, CandidateScore};
pub use ldp::{ldp_sigma, train_ldp_baseline, LdpNoise, LdpRun};
pub use masked::{
    calibrate_for, replay, train_masked, MaskedOptions, MaskedRun, ReplayReport, TrainStatus,
};
pub use noise::{active_noise, noise_calibration, sample_noise_column, NoiseMatrix, NoiseParts};
pub use noising::{
    information_noising, information_noising_with, sphere_coefficients, NoisedResponse,
};
pub use party::{ActiveParty, NodeSecret, NoiseSchedule, PassiveParty, PpPrivateState};
pub use splitting::{build_splitting_vector, CategoricalMatrix, SplittingVector};
pub use transcript::{
    Direction, MessageKind, NoiseMessage, PayloadMode, Record, ScoreMessage, Transcript,
};
