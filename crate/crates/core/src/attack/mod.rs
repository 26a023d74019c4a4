//! Honest-but-curious attackers against the masked protocol.
//!
//! The active party sees the passive party's noise matrices and may try to read
//! the splitting vector out of them; the passive party sees the noised
//! gradients and may try to read the labels. Both attackers here are linear and
//! know everything the protocol reveals to them.

mod attribute;
mod label;
mod report;

pub use attribute::{
    attribute_trials, pp_attribute_attack, AttributeGuess, AttributeTrialConfig, MAX_EXACT_N,
};
pub use label::{ap_label_attack, label_trials, LabelGuess, LabelTrialConfig};
pub use report::{AttackKind, AttackReport, AttackSetting};
