use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    LabelInference,
    AttributeInference,
}

/// Noise and geometry a batch of trials ran under. Budgets are absent when the
/// noise scales were fixed by hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSetting {
    pub eps_ap: Option<f64>,
    pub delta_ap: Option<f64>,
    pub eps_pp: Option<f64>,
    pub delta_pp: Option<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Coefficient-sphere radius²; only meaningful for the label attack.
    pub c: Option<f64>,
    pub n: usize,
    pub n_active: usize,
    pub w: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub kind: AttackKind,
    /// Accuracy for labels, bit-match rate for splitting vectors.
    pub per_trial: Vec<f64>,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    /// Standard error of `mean` from the per-trial spread.
    pub std_error: f64,
    /// Chance level of the metric for this geometry.
    pub chance: f64,
    pub setting: AttackSetting,
    /// Trials answered by the greedy search instead of exact enumeration.
    #[serde(default)]
    pub heuristic_trials: usize,
    /// Set when the noise subspace spans the whole space and the estimate is meaningless.
    #[serde(default)]
    pub unreliable: bool,
}

impl AttackReport {
    pub(crate) fn from_trials(
        kind: AttackKind,
        per_trial: Vec<f64>,
        chance: f64,
        setting: AttackSetting,
    ) -> Result<Self> {
        if per_trial.is_empty() {
            return Err(Error::arg("an attack report needs at least one trial"));
        }
        if per_trial.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::numeric("attack metric outside [0, 1]"));
        }
        let trials = per_trial.len();
        let mean = per_trial.iter().sum::<f64>() / trials as f64;
        let var = if trials > 1 {
            per_trial.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (trials - 1) as f64
        } else {
            0.0
        };
        let std = var.sqrt();
        Ok(Self {
            kind,
            per_trial,
            trials,
            mean,
            std,
            std_error: std / (trials as f64).sqrt(),
            chance,
            setting,
            heuristic_trials: 0,
            unreliable: false,
        })
    }

    /// `|mean - chance|` in units of the binomial standard error over `bits` independent bits.
    pub fn binomial_z(&self, bits_per_trial: usize) -> f64 {
        let total = (self.trials * bits_per_trial) as f64;
        let se = (self.chance * (1.0 - self.chance) / total).sqrt();
        if se == 0.0 {
            return if self.mean == self.chance {
                0.0
            } else {
                f64::INFINITY
            };
        }
        (self.mean - self.chance).abs() / se
    }
}
