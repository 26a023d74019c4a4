//! Requested budgets, their per-query schedule and the calibrated noise parameters.

use serde::{Deserialize, Serialize};

use super::ap::{calibrate_c, mu_logistic};
use super::composition::{compose, schedule_queries, Budget, Composition, QuerySchedule};
use super::pp::{calibrate_sigma2, DeltaEstimate, QuadFormSampler, DEFAULT_MC_SAMPLES};
use crate::error::{Error, Result};

/// What a passive-party budget covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PpScope {
    /// `(eps_PP, delta_PP)` protects each released noise matrix.
    #[default]
    PerMatrix,
    /// `(eps_PP, delta_PP)` is a total over every matrix of the run.
    Composed,
}

impl std::str::FromStr for PpScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_matrix" => Ok(PpScope::PerMatrix),
            "composed" => Ok(PpScope::Composed),
            other => Err(Error::arg(format!("unknown PP scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub eps_ap: f64,
    pub delta_ap: f64,
    pub eps_pp: f64,
    pub delta_pp: f64,
    pub w: usize,
    pub rounds: usize,
    pub depth: usize,
    #[serde(default)]
    pub composition: Composition,
    /// Count each candidate release as its own sequential query on the active side.
    #[serde(default = "yes")]
    pub per_candidate: bool,
    #[serde(default)]
    pub pp_scope: PpScope,
    #[serde(default = "one")]
    pub sigma1: f64,
    #[serde(default = "mc_default")]
    pub mc_samples: usize,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

fn mc_default() -> usize {
    DEFAULT_MC_SAMPLES
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            eps_ap: 1.0,
            delta_ap: 1e-3,
            eps_pp: 1.0,
            delta_pp: 1e-3,
            w: 1,
            rounds: 20,
            depth: 4,
            composition: Composition::Advanced,
            per_candidate: true,
            pp_scope: PpScope::PerMatrix,
            sigma1: 1.0,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

impl PrivacyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_ap > 0.0 && self.eps_ap.is_finite()) {
            return Err(Error::arg("eps_AP must be positive"));
        }
        for (name, d) in [("delta_AP", self.delta_ap), ("delta_PP", self.delta_pp)] {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::arg(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.w == 0 {
            return Err(Error::arg("W must be at least 1"));
        }
        if !(self.eps_pp > self.w as f64 * std::f64::consts::LN_2) {
            return Err(Error::arg(format!(
                "eps_PP = {} must exceed W ln 2 with W = {}",
                self.eps_pp, self.w
            )));
        }
        if self.rounds == 0 || self.depth == 0 {
            return Err(Error::arg("rounds and depth must be at least 1"));
        }
        if !(self.sigma1 > 0.0) {
            return Err(Error::arg("sigma1 must be positive"));
        }
        Ok(())
    }

    /// Sequential active-party queries: one per tree level, times the node's
    /// candidate count when releases are counted per candidate.
    pub fn ap_queries(&self, candidates: usize) -> usize {
        let per_level = if self.per_candidate {
            candidates.max(1)
        } else {
            1
        };
        self.rounds * self.depth * per_level
    }

    pub fn pp_queries(&self, candidates: usize) -> usize {
        match self.pp_scope {
            PpScope::PerMatrix => 1,
            PpScope::Composed => self.rounds * self.depth * candidates.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartyBudgets {
    pub ap: QuerySchedule,
    pub pp: QuerySchedule,
}

/// Per-query budgets for both parties; `candidates` is the passive party's
/// candidate count per node.
pub fn budget_schedule(config: &PrivacyConfig, candidates: usize) -> Result<PartyBudgets> {
    config.validate()?;
    let ap = schedule_queries(
        Budget::new(config.eps_ap, config.delta_ap),
        config.ap_queries(candidates),
        config.composition,
    )?;
    let pp_total = Budget::new(config.eps_pp, config.delta_pp);
    let pp = match config.pp_scope {
        PpScope::PerMatrix => schedule_queries(pp_total, 1, Composition::Basic)?,
        PpScope::Composed => {
            schedule_queries(pp_total, config.pp_queries(candidates), config.composition)?
        }
    };
    Ok(PartyBudgets { ap, pp })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub w: usize,
    /// `s2² / (2 s1²)`
    pub noise_ratio: f64,
    pub mu: f64,
    pub schedule: PartyBudgets,
    /// Instance count used for the passive-party calibration.
    pub calibration_n: usize,
    pub candidates: usize,
    /// Sequential active-party units one tree level consumes.
    pub ap_units_per_level: usize,
    pub pp_delta: DeltaEstimate,
}

impl CalibratedParams {
    /// Coefficient radius² for a release whose splitting vector has this geometry.
    pub fn c_for(&self, n_active: usize, n_inactive: usize) -> Result<f64> {
        let q = self.schedule.ap.per_query;
        calibrate_c(
            q.eps,
            q.delta,
            n_active,
            n_inactive,
            self.mu,
            self.sigma1,
            self.sigma2,
        )
    }

    /// The document printed by the `calibrate` command.
    pub fn document(&self) -> serde_json::Value {
        let ap = self.schedule.ap;
        let pp = self.schedule.pp;
        serde_json::json!({
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "C_formula_inputs": {
                "mu": self.mu,
                "sigma1": self.sigma1,
                "sigma2": self.sigma2,
                "eps": ap.per_query.eps,
                "delta": ap.per_query.delta,
                "note": "C = (n_I mu^2 / (2 sigma1^2 + sigma2^2) + n_A mu^2 / sigma2^2) / budget(eps, delta), per node and candidate",
            },
            "W": self.w,
            "noise_ratio": self.noise_ratio,
            "per_query": {
                "ap": {"eps": ap.per_query.eps, "delta": ap.per_query.delta},
                "pp": {"eps": pp.per_query.eps, "delta": pp.per_query.delta},
            },
            "accountant": {
                "mode": ap.mode,
                "k": ap.k,
                "delta_prime": ap.delta_prime,
                "pp": {"mode": pp.mode, "k": pp.k, "delta_prime": pp.delta_prime},
            },
            "pp_delta": self.pp_delta,
            "calibration_n": self.calibration_n,
            "candidates": self.candidates,
        })
    }
}

/// Schedules both budgets and calibrates `s2` so one noise matrix over `n`
/// instances meets the passive party's per-query budget.
pub fn calibrate(
    config: &PrivacyConfig,
    n: usize,
    candidates: usize,
    seed: u64,
) -> Result<CalibratedParams> {
    let schedule = budget_schedule(config, candidates)?;
    let sampler = QuadFormSampler::new(config.mc_samples, seed);
    let q = schedule.pp.per_query;
    let cal = calibrate_sigma2(q.eps, q.delta, config.w, n, config.sigma1, &sampler)?;
    Ok(CalibratedParams {
        sigma1: config.sigma1,
        sigma2: cal.sigma2,
        w: config.w,
        noise_ratio: cal.noise_ratio,
        mu: mu_logistic(),
        schedule,
        calibration_n: n,
        candidates,
        ap_units_per_level: config.ap_queries(candidates) / (config.rounds * config.depth),
        pp_delta: cal.delta,
    })
}

/// Tracks sequential active-party units against a schedule.
#[derive(Debug, Clone)]
pub struct Accountant {
    schedule: QuerySchedule,
    used: usize,
}

impl Accountant {
    pub fn new(schedule: QuerySchedule) -> Self {
        Self { schedule, used: 0 }
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn remaining(&self) -> usize {
        self.schedule.k - self.used
    }

    /// Consumes `units` if they fit, otherwise leaves the ledger untouched.
    pub fn try_spend(&mut self, units: usize) -> bool {
        if units <= self.remaining() {
            self.used += units;
            true
        } else {
            false
        }
    }

    /// Composition of everything spent so far.
    pub fn spent(&self) -> Result<Budget> {
        if self.used == 0 {
            return Ok(Budget::new(0.0, 0.0));
        }
        compose(
            &vec![self.schedule.per_query; self.used],
            self.schedule.compose_mode(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PrivacyConfig {
        PrivacyConfig {
            mc_samples: 100_000,
            rounds: 2,
            depth: 2,
            ..PrivacyConfig::default()
        }
    }

    #[test]
    fn validation() {
        assert!(small().validate().is_ok());
        assert!(PrivacyConfig {
            eps_pp: 2.0,
            w: 3,
            ..small()
        }
        .validate()
        .is_err());
        assert!(PrivacyConfig {
            delta_ap: 1.0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(PrivacyConfig { w: 0, ..small() }.validate().is_err());
    }

    #[test]
    fn query_counts() {
        let c = PrivacyConfig {
            rounds: 3,
            depth: 4,
            ..small()
        };
        assert_eq!(c.ap_queries(10), 120);
        assert_eq!(
            PrivacyConfig {
                per_candidate: false,
                ..c.clone()
            }
            .ap_queries(10),
            12
        );
        assert_eq!(c.pp_queries(10), 1);
        assert_eq!(
            PrivacyConfig {
                pp_scope: PpScope::Composed,
                ..c
            }
            .pp_queries(10),
            120
        );
    }

    #[test]
    fn calibrated_c_satisfies_condition() {
        let p = calibrate(&small(), 200, 4, 1).unwrap();
        let c = p.c_for(50, 150).unwrap();
        let q = p.schedule.ap.per_query;
        let lhs = super::super::ap::ap_condition(50, 150, p.mu, p.sigma1, p.sigma2, c);
        let rhs = super::super::ap::ap_sensitivity_budget(q.eps, q.delta).unwrap();
        assert!((lhs - rhs).abs() <= 1e-9 * rhs);
        assert!(p.pp_delta.conservative() <= p.schedule.pp.per_query.delta);
        let doc = p.document();
        assert_eq!(doc["W"], 1);
        assert_eq!(doc["accountant"]["k"], 16);
    }

    #[test]
    fn composed_pp_scope_is_infeasible_at_unit_budget() {
        let c = PrivacyConfig {
            pp_scope: PpScope::Composed,
            ..small()
        };
        assert!(calibrate(&c, 200, 4, 1).is_err());
    }

    #[test]
    fn accountant_stops_at_k() {
        let s = schedule_queries(Budget::new(1.0, 1e-3), 4, Composition::Basic).unwrap();
        let mut a = Accountant::new(s);
        assert!(a.try_spend(3));
        assert!(!a.try_spend(2));
        assert!(a.try_spend(1));
        assert_eq!(a.remaining(), 0);
        assert!(a.spent().unwrap().within(&Budget::new(1.0, 1e-3)));
    }
}
