//! Two-party vertical federated gradient boosting where the passive party's
//! splitting vectors are hidden behind structured lossless-plus-disturbing noise.
//!
//! The active party (AP) holds labels and some features; the passive party (PP)
//! holds the remaining features. Split scores for PP candidates are evaluated on
//! noised gradient statistics whose noise cancels exactly on the candidate's
//! left child except for a small isotropic component.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod boost;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod privacy;
pub mod protocol;
pub mod rng;

pub use attack::{AttackKind, AttackReport};
pub use boost::{
    best_split_bruteforce, grad_hess, leaf_weight, sigmoid, split_score, train_centralized,
    Candidates, GradPair, HandleTable, Owner, TrainParams, TreeModel,
};
pub use data::{
    gen_synthetic, load_csv, write_csv, Dataset, FeatureMatrix, SyntheticSpec, VerticalSplit,
};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, Method, RunRecord, SummaryRow};
pub use metrics::auc;
pub use privacy::{calibrate, CalibratedParams, PrivacyConfig};
