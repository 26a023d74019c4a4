//! Sequential and parallel composition, and the inverse problem of splitting a
//! total budget across `k` sequential queries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub eps: f64,
    pub delta: f64,
}

impl Budget {
    pub fn new(eps: f64, delta: f64) -> Self {
        Self { eps, delta }
    }

    /// Componentwise `<=`.
    pub fn within(&self, total: &Budget) -> bool {
        self.eps <= total.eps && self.delta <= total.delta
    }
}

/// How `compose` combines a sequence of mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum CompositionMode {
    Basic,
    Advanced { delta_prime: f64 },
}

/// Accountant choice for scheduling; the advanced slack is half the total δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    Basic,
    #[default]
    Advanced,
}

impl std::str::FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Composition::Basic),
            "advanced" => Ok(Composition::Advanced),
            other => Err(Error::arg(format!("unknown composition mode {other:?}"))),
        }
    }
}

/// `eps sqrt(2k ln(1/δ')) + k eps (e^eps - 1)`.
pub fn advanced_epsilon(eps: f64, k: usize, delta_prime: f64) -> f64 {
    let kf = k as f64;
    eps * (2.0 * kf * (1.0 / delta_prime).ln()).sqrt() + kf * eps * eps.exp_m1()
}

fn check(b: &Budget) -> Result<()> {
    if !(b.eps >= 0.0 && b.eps.is_finite() && (0.0..=1.0).contains(&b.delta)) {
        return Err(Error::arg(format!(
            "invalid mechanism budget ({}, {})",
            b.eps, b.delta
        )));
    }
    Ok(())
}

/// Sequential composition of mechanisms run on the same data.
pub fn compose(mechanisms: &[Budget], mode: CompositionMode) -> Result<Budget> {
    for m in mechanisms {
        check(m)?;
    }
    match mode {
        CompositionMode::Basic => Ok(Budget {
            eps: mechanisms.iter().map(|m| m.eps).sum(),
            delta: mechanisms.iter().map(|m| m.delta).sum(),
        }),
        CompositionMode::Advanced { delta_prime } => {
            if !(delta_prime > 0.0 && delta_prime < 1.0) {
                return Err(Error::arg("advanced composition needs 0 < delta' < 1"));
            }
            let Some(first) = mechanisms.first() else {
                return Err(Error::arg(
                    "advanced composition needs at least one mechanism",
                ));
            };
            if mechanisms.iter().any(|m| m != first) {
                return Err(Error::arg(
                    "advanced composition requires identical budgets",
                ));
            }
            let k = mechanisms.len();
            Ok(Budget {
                eps: advanced_epsilon(first.eps, k, delta_prime),
                delta: k as f64 * first.delta + delta_prime,
            })
        }
    }
}

/// Parallel composition over disjoint subsets: componentwise maximum.
pub fn compose_parallel(mechanisms: &[Budget]) -> Result<Budget> {
    let mut out = Budget::new(0.0, 0.0);
    for m in mechanisms {
        check(m)?;
        out.eps = out.eps.max(m.eps);
        out.delta = out.delta.max(m.delta);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuerySchedule {
    pub per_query: Budget,
    pub k: usize,
    pub mode: Composition,
    /// Zero in basic mode.
    pub delta_prime: f64,
    /// `per_query` composed `k` times; never exceeds the total.
    pub composed: Budget,
}

impl QuerySchedule {
    pub fn compose_mode(&self) -> CompositionMode {
        match self.mode {
            Composition::Basic => CompositionMode::Basic,
            Composition::Advanced => CompositionMode::Advanced {
                delta_prime: self.delta_prime,
            },
        }
    }
}

fn composed(per: Budget, k: usize, mode: CompositionMode) -> Result<Budget> {
    compose(&vec![per; k], mode)
}

/// Largest per-query budget whose `k`-fold composition stays within `total`.
pub fn schedule_queries(total: Budget, k: usize, mode: Composition) -> Result<QuerySchedule> {
    if k == 0 {
        return Err(Error::arg("query count must be at least 1"));
    }
    if !(total.eps > 0.0 && total.eps.is_finite() && total.delta > 0.0 && total.delta < 1.0) {
        return Err(Error::arg(format!(
            "invalid total budget ({}, {})",
            total.eps, total.delta
        )));
    }
    let kf = k as f64;
    let (cm, delta_prime, mut per) = match mode {
        Composition::Basic => (
            CompositionMode::Basic,
            0.0,
            Budget::new(total.eps / kf, total.delta / kf),
        ),
        Composition::Advanced => {
            let dp = total.delta / 2.0;
            let cm = CompositionMode::Advanced { delta_prime: dp };
            let (mut lo, mut hi) = (0.0, total.eps);
            if advanced_epsilon(hi, k, dp) <= total.eps {
                lo = hi;
            }
            for _ in 0..200 {
                if hi - lo <= 1e-15 * hi {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if advanced_epsilon(mid, k, dp) <= total.eps {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (cm, dp, Budget::new(lo, total.delta / (2.0 * kf)))
        }
    };
    // Rounding in the forward map can overshoot the total slightly.
    let mut out = composed(per, k, cm)?;
    for _ in 0..64 {
        if out.within(&total) {
            break;
        }
        // Step by the measured excess: summing many tiny terms can drift by far more than one ulp.
        if out.eps > total.eps {
            per.eps = (per.eps - (out.eps - total.eps) / kf).next_down();
        }
        if out.delta > total.delta {
            per.delta = (per.delta - (out.delta - total.delta) / kf).next_down();
        }
        out = composed(per, k, cm)?;
    }
    if !out.within(&total) || !(per.eps > 0.0) || !(per.delta > 0.0) {
        return Err(Error::calibration(format!(
            "cannot split ({}, {}) across {k} queries",
            total.eps, total.delta
        )));
    }
    Ok(QuerySchedule {
        per_query: per,
        k,
        mode,
        delta_prime,
        composed: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn many_small_queries_stay_within_total() {
        for k in [1, 7, 768, 5000] {
            for mode in [Composition::Basic, Composition::Advanced] {
                let q = schedule_queries(Budget::new(1.0, 1e-3), k, mode).unwrap();
                assert!(q.composed.within(&Budget::new(1.0, 1e-3)), "k={k} {mode:?}");
            }
        }
    }

    #[test]
    fn basic_sums() {
        let b = Budget::new(1.0, 1e-3);
        let t = compose(&[b, b], CompositionMode::Basic).unwrap();
        assert_eq!(t, Budget::new(2.0, 2e-3));
        assert_eq!(
            compose(&[], CompositionMode::Basic).unwrap(),
            Budget::new(0.0, 0.0)
        );
    }

    #[test]
    fn advanced_single_query() {
        let t = compose(
            &[Budget::new(1.0, 0.0)],
            CompositionMode::Advanced { delta_prime: 1e-6 },
        )
        .unwrap();
        let oracle = (2.0 * 1e6f64.ln()).sqrt() + (std::f64::consts::E - 1.0);
        assert_relative_eq!(t.eps, oracle, max_relative = 1e-14);
        assert!((t.eps - 6.9748).abs() < 1e-3);
        assert_eq!(t.delta, 1e-6);
    }

    #[test]
    fn advanced_rejects_mixed_budgets() {
        let mixed = [Budget::new(1.0, 0.0), Budget::new(2.0, 0.0)];
        assert!(compose(&mixed, CompositionMode::Advanced { delta_prime: 1e-6 }).is_err());
        assert!(compose(&mixed[..1], CompositionMode::Advanced { delta_prime: 0.0 }).is_err());
    }

    #[test]
    fn parallel_is_max() {
        let t = compose_parallel(&[Budget::new(1.0, 1e-3), Budget::new(2.0, 1e-4)]).unwrap();
        assert_eq!(t, Budget::new(2.0, 1e-3));
    }

    #[test]
    fn single_basic_query_keeps_total() {
        let s = schedule_queries(Budget::new(1.5, 1e-3), 1, Composition::Basic).unwrap();
        assert_eq!(s.per_query, Budget::new(1.5, 1e-3));
    }

    #[test]
    fn schedules_round_trip() {
        let total = Budget::new(1.0, 1e-3);
        for t in 1..=60 {
            for depth in 1..=6 {
                let k = t * depth;
                for mode in [Composition::Basic, Composition::Advanced] {
                    let s = schedule_queries(total, k, mode).unwrap();
                    let back = compose(&vec![s.per_query; k], s.compose_mode()).unwrap();
                    assert!(
                        back.within(&total),
                        "T={t} depth={depth} {mode:?}: {back:?}"
                    );
                    assert!(back.eps > 0.999 * total.eps, "{back:?}");
                }
            }
        }
    }

    #[test]
    fn advanced_beats_basic_at_sixty() {
        let total = Budget::new(1.0, 1e-3);
        let adv = schedule_queries(total, 60, Composition::Advanced).unwrap();
        assert!(
            adv.per_query.eps > total.eps / 60.0,
            "{}",
            adv.per_query.eps
        );
    }
}
