//! Non-private XGBoost training.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};

use super::grow::{grow_tree, GrownTree, NodeContext, SplitDecision, SplitRule, SplitSearch};
use super::loss::{grad_hess, GradPair};
use super::split::{beats, gain_from_left, Candidates, SplitChoice};
use super::tree::TreeModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
    pub candidates_per_feature: usize,
    /// Score splits from gradients alone (unit Hessians), the GBDT variant.
    #[serde(default)]
    pub gradient_only: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            rounds: 20,
            max_depth: 4,
            lambda: 1.0,
            gamma: 0.0,
            eta: 0.3,
            candidates_per_feature: 32,
            gradient_only: false,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.candidates_per_feature == 0 {
            return Err(Error::arg("candidates_per_feature must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0 && self.eta > 0.0) {
            return Err(Error::arg("need lambda >= 0, gamma >= 0, eta > 0"));
        }
        Ok(())
    }

    pub(crate) fn gradients(&self, labels: &[u8], margins: &[f64]) -> Result<GradPair> {
        let gp = grad_hess(labels, margins)?;
        Ok(if self.gradient_only {
            gp.with_unit_hessian()
        } else {
            gp
        })
    }
}

/// Exact split search over one party's own features. Each candidate's left sums
/// are accumulated in node-row order, the same order the reference search and
/// the passive party's splitting-vector products use.
pub struct LocalSplitFinder<'a> {
    features: &'a FeatureMatrix,
    candidates: Candidates,
    buckets: Vec<Vec<u32>>,
    lambda: f64,
    gamma: f64,
}

impl<'a> LocalSplitFinder<'a> {
    pub fn new(
        features: &'a FeatureMatrix,
        candidates_per_feature: usize,
        lambda: f64,
        gamma: f64,
    ) -> Result<Self> {
        let candidates = Candidates::quantiles(features, candidates_per_feature)?;
        let buckets = candidates.buckets(features);
        Ok(Self {
            features,
            candidates,
            buckets,
            lambda,
            gamma,
        })
    }

    pub fn candidates(&self) -> &Candidates {
        &self.candidates
    }

    /// Best finite-score split among this party's features, or `None`.
    pub fn search(&self, rows: &[usize], gp: &GradPair) -> Option<SplitChoice> {
        let (g, h) = gp.sums(rows);
        let mut best: Option<SplitChoice> = None;
        let mut counts = Vec::new();
        for (j, ts) in self.candidates.per_feature.iter().enumerate() {
            let bucket = &self.buckets[j];
            counts.clear();
            counts.resize(ts.len() + 1, 0usize);
            for &r in rows {
                counts[bucket[r] as usize] += 1;
            }
            let mut n_left = 0;
            for (k, &t) in ts.iter().enumerate() {
                n_left += counts[k];
                // an empty bucket repeats the previous partition, which already won any tie
                if (k > 0 && counts[k] == 0) || n_left == 0 || n_left == rows.len() {
                    continue;
                }
                let (mut gl, mut hl) = (0.0, 0.0);
                for &r in rows {
                    if bucket[r] as usize <= k {
                        gl += gp.g[r];
                        hl += gp.h[r];
                    }
                }
                let score = gain_from_left(gl, hl, g, h, self.lambda, self.gamma);
                if score.is_finite() && best.is_none_or(|b| beats(score, b.score)) {
                    best = Some(SplitChoice {
                        score,
                        feature: j,
                        candidate: k,
                        threshold: t,
                    });
                }
            }
        }
        best
    }

    pub(crate) fn partition(
        &self,
        feature: usize,
        threshold: f64,
        rows: &[usize],
    ) -> (Vec<usize>, Vec<usize>) {
        rows.iter()
            .partition(|&&r| self.features.get(r, feature) <= threshold)
    }
}

impl SplitSearch for LocalSplitFinder<'_> {
    fn best_split(
        &mut self,
        ctx: &NodeContext<'_>,
        gp: &GradPair,
    ) -> Result<Option<SplitDecision>> {
        Ok(self.search(ctx.rows, gp).map(|c| SplitDecision {
            score: c.score,
            rule: SplitRule::Local {
                feature: c.feature,
                threshold: c.threshold,
            },
        }))
    }

    fn partition(&self, rule: &SplitRule, rows: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        match *rule {
            SplitRule::Local { feature, threshold } => {
                Ok(LocalSplitFinder::partition(self, feature, threshold, rows))
            }
            SplitRule::Remote { .. } => {
                Err(Error::arg("local finder cannot resolve remote handles"))
            }
        }
    }
}

/// Applies a grown tree's leaf weights to the running margins.
pub(crate) fn apply_leaves(margins: &mut [f64], grown: &GrownTree, eta: f64) {
    for (w, rows) in &grown.leaves {
        for &r in rows {
            margins[r] += eta * w;
        }
    }
}

/// Shared boosting loop: recompute gradients, grow one tree, update margins.
pub(crate) fn boost<S: SplitSearch>(
    search: &mut S,
    labels: &[u8],
    params: &TrainParams,
    clip: Option<f64>,
) -> Result<TreeModel> {
    params.validate()?;
    let n = labels.len();
    let mut model = TreeModel::empty(
        params.eta,
        params.lambda,
        params.gamma,
        params.max_depth,
        params.rounds,
    );
    let mut margins = vec![model.initial_margin; n];
    for t in 0..params.rounds {
        if !search.begin_tree(t)? {
            break;
        }
        let mut gp = params.gradients(labels, &margins)?;
        if let Some(bound) = clip {
            gp.clip_gradients(bound);
        }
        let grown = grow_tree(
            search,
            t,
            &gp,
            (0..n).collect(),
            params.max_depth,
            params.lambda,
        )?;
        apply_leaves(&mut margins, &grown, params.eta);
        model.trees.push(grown.tree);
    }
    Ok(model)
}

pub fn train_centralized(data: &Dataset, params: &TrainParams) -> Result<TreeModel> {
    params.validate()?;
    let mut finder = LocalSplitFinder::new(
        data.features(),
        params.candidates_per_feature,
        params.lambda,
        params.gamma,
    )?;
    boost(&mut finder, data.labels(), params, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boost::split::best_split_bruteforce;
    use crate::boost::tree::Owner;
    use crate::data::{gen_synthetic, SyntheticSpec};
    use crate::metrics::auc;
    use proptest::prelude::*;

    #[test]
    fn separable_single_split() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels = (0..10).map(|i| u8::from(i >= 5)).collect();
        let ds = Dataset::from_rows(&rows, labels).unwrap();
        let params = TrainParams {
            rounds: 1,
            max_depth: 1,
            candidates_per_feature: 9,
            ..TrainParams::default()
        };
        let m = train_centralized(&ds, &params).unwrap();
        assert_eq!(m.trees.len(), 1);
        assert_eq!(m.trees[0].nodes[0].threshold, Some(4.0));
        let p = m.predict(ds.features(), None).unwrap();
        assert_eq!(auc(ds.labels(), &p).unwrap(), 1.0);
    }

    #[test]
    fn depth_zero_gives_stumps_of_leaves() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![1, 1, 0]).unwrap();
        let params = TrainParams {
            rounds: 2,
            max_depth: 0,
            ..TrainParams::default()
        };
        let m = train_centralized(&ds, &params).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        let sum_w: f64 = m.trees.iter().map(|t| t.nodes[0].weight.unwrap()).sum();
        let p = m.predict(ds.features(), None).unwrap();
        let expected = crate::boost::sigmoid(m.eta * sum_w);
        assert!(p.iter().all(|&x| (x - expected).abs() < 1e-15));
    }

    #[test]
    fn centralized_owner_is_ap() {
        let ds = gen_synthetic(&SyntheticSpec {
            n: 80,
            d_ap: 1,
            d_pp: 1,
            balance: 0.5,
            label_noise: 0.1,
            seed: 2,
        })
        .unwrap();
        let m = train_centralized(
            &ds,
            &TrainParams {
                rounds: 2,
                max_depth: 2,
                ..TrainParams::default()
            },
        )
        .unwrap();
        assert!(m
            .trees
            .iter()
            .flat_map(|t| &t.nodes)
            .all(|n| n.owner == Owner::Ap));
        m.validate().unwrap();
    }

    #[test]
    fn training_loss_is_monotone() {
        let ds = gen_synthetic(&SyntheticSpec {
            n: 300,
            d_ap: 2,
            d_pp: 1,
            balance: 0.4,
            label_noise: 0.15,
            seed: 5,
        })
        .unwrap();
        let params = TrainParams {
            rounds: 8,
            max_depth: 3,
            eta: 0.5,
            ..TrainParams::default()
        };
        let m = train_centralized(&ds, &params).unwrap();
        let mut prev = f64::INFINITY;
        for t in 0..=m.trees.len() {
            let mut partial = m.clone();
            partial.trees.truncate(t);
            let p = partial.predict(ds.features(), None).unwrap();
            let loss: f64 = ds
                .labels()
                .iter()
                .zip(&p)
                .map(|(&y, &p)| if y == 1 { -p.ln() } else { -(1.0 - p).ln() })
                .sum();
            assert!(loss <= prev + 1e-9, "round {t}: {loss} > {prev}");
            prev = loss;
        }
    }

    /// Grows one tree with the fast finder and checks every internal node against the exhaustive search.
    fn check_against_bruteforce(ds: &Dataset, l: usize, depth: usize, gamma: f64) {
        let params = TrainParams {
            rounds: 1,
            max_depth: depth,
            candidates_per_feature: l,
            gamma,
            ..TrainParams::default()
        };
        let finder = LocalSplitFinder::new(ds.features(), l, params.lambda, gamma).unwrap();
        let gp = params.gradients(ds.labels(), &vec![0.3; ds.n()]).unwrap();
        let mut stack = vec![((0..ds.n()).collect::<Vec<_>>(), 0usize)];
        while let Some((rows, d)) = stack.pop() {
            if d >= depth || rows.len() < 2 {
                continue;
            }
            let fast = finder.search(&rows, &gp);
            let brute = best_split_bruteforce(
                ds.features(),
                &rows,
                &gp,
                finder.candidates(),
                params.lambda,
                gamma,
            )
            .unwrap();
            if brute.score.is_finite() {
                let fast = fast.expect("fast finder missed a finite split");
                assert_eq!(
                    (fast.feature, fast.candidate),
                    (brute.feature, brute.candidate)
                );
                assert_eq!(fast.score.to_bits(), brute.score.to_bits());
                let (l, r) = finder.partition(fast.feature, fast.threshold, &rows);
                stack.push((l, d + 1));
                stack.push((r, d + 1));
            } else {
                assert!(fast.is_none());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn trainer_matches_bruteforce(seed in 0u64..10_000, n in 4usize..=64, d_pp in 0usize..=2, l in 1usize..12) {
            let ds = gen_synthetic(&SyntheticSpec { n: n.max(10), d_ap: 1, d_pp, balance: 0.5, label_noise: 0.2, seed }).unwrap();
            check_against_bruteforce(&ds, l, 3, 0.0);
        }

        #[test]
        fn leaf_weight_is_optimal(seed in 0u64..1000) {
            let ds = gen_synthetic(&SyntheticSpec { n: 40, d_ap: 2, d_pp: 0, balance: 0.5, label_noise: 0.2, seed }).unwrap();
            let params = TrainParams { rounds: 1, max_depth: 2, ..TrainParams::default() };
            let mut finder = LocalSplitFinder::new(ds.features(), 8, 1.0, 0.0).unwrap();
            let gp = params.gradients(ds.labels(), &vec![0.0; 40]).unwrap();
            let grown = grow_tree(&mut finder, 0, &gp, (0..40).collect(), 2, 1.0).unwrap();
            for (w, rows) in &grown.leaves {
                let (g, h) = gp.sums(rows);
                let obj = |w: f64| g * w + 0.5 * (h + 1.0) * w * w;
                prop_assert!(obj(w + 1e-3) >= obj(*w));
                prop_assert!(obj(w - 1e-3) >= obj(*w));
            }
        }
    }

    #[test]
    fn duplicate_columns_tie_to_first_feature() {
        let base = gen_synthetic(&SyntheticSpec {
            n: 50,
            d_ap: 1,
            d_pp: 0,
            balance: 0.5,
            label_noise: 0.1,
            seed: 4,
        })
        .unwrap();
        let col = base.features().column(0);
        let fm =
            FeatureMatrix::from_columns(&[col.clone(), col], vec!["a".into(), "b".into()]).unwrap();
        let ds = Dataset::new(fm, base.labels().to_vec()).unwrap();
        check_against_bruteforce(&ds, 10, 3, 0.0);
        let m = train_centralized(
            &ds,
            &TrainParams {
                rounds: 3,
                max_depth: 3,
                ..TrainParams::default()
            },
        )
        .unwrap();
        assert!(m
            .trees
            .iter()
            .flat_map(|t| &t.nodes)
            .all(|n| n.feature.is_none_or(|f| f == 0)));
    }
}
