//! Centralized XGBoost primitives shared by every trainer.

mod grow;
pub mod loss;
pub mod split;
pub mod train;
pub mod tree;

pub(crate) use grow::{NodeContext, SplitDecision, SplitRule, SplitSearch};
pub use loss::{grad_hess, sigmoid, GradPair};
pub use split::{
    beats, best_split_bruteforce, leaf_weight, split_score, Candidates, SplitChoice, TIE_TOLERANCE,
};
pub(crate) use train::boost;
pub use train::{train_centralized, LocalSplitFinder, TrainParams};
pub use tree::{HandleTable, Node, NodeShape, Owner, Tree, TreeModel, MODEL_VERSION};
