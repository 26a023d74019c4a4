//! Split scoring, leaf weights and candidate thresholds.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

use super::loss::GradPair;

/// Relative margin within which two scores count as tied. Equal partitions
/// reached through different features or through lossless noise differ only by
/// rounding, so every split search uses this slack to keep the lower-index rule.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// `new` beats `old` by more than the tie tolerance.
pub fn beats(new: f64, old: f64) -> bool {
    if !(new.is_finite() && old.is_finite()) {
        return new > old;
    }
    new > old + TIE_TOLERANCE * new.abs().max(old.abs()) + 1e-12
}

/// Gain of splitting a node with totals `(g, h)` into `(gl, hl)` and `(gr, hr)`.
#[allow(clippy::too_many_arguments)]
pub fn split_score(
    gl: f64,
    hl: f64,
    gr: f64,
    hr: f64,
    g: f64,
    h: f64,
    lambda: f64,
    gamma: f64,
) -> Result<f64> {
    if !(hl + lambda > 0.0 && hr + lambda > 0.0 && h + lambda > 0.0) {
        return Err(Error::numeric(format!(
            "non-positive denominator (hl+λ={}, hr+λ={}, H+λ={})",
            hl + lambda,
            hr + lambda,
            h + lambda
        )));
    }
    let tol = 1e-9 * (1.0 + g.abs().max(h.abs()));
    if (gl + gr - g).abs() > tol || (hl + hr - h).abs() > tol {
        return Err(Error::arg("child sums do not add up to the node totals"));
    }
    Ok(gain(gl, hl, gr, hr, g, h, lambda, gamma))
}

/// Unchecked gain; the caller guarantees positive denominators.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn gain(
    gl: f64,
    hl: f64,
    gr: f64,
    hr: f64,
    g: f64,
    h: f64,
    lambda: f64,
    gamma: f64,
) -> f64 {
    -gamma + 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda))
}

/// Gain from the left-child sums and node totals, with the right child as the
/// complement. Returns `-inf` when a noised Hessian makes a denominator non-positive.
#[inline]
pub(crate) fn gain_from_left(gl: f64, hl: f64, g: f64, h: f64, lambda: f64, gamma: f64) -> f64 {
    let gr = g - gl;
    let hr = h - hl;
    if hl + lambda <= 0.0 || hr + lambda <= 0.0 || h + lambda <= 0.0 {
        return f64::NEG_INFINITY;
    }
    gain(gl, hl, gr, hr, g, h, lambda, gamma)
}

pub fn leaf_weight(sum_g: f64, sum_h: f64, lambda: f64) -> Result<f64> {
    if sum_h + lambda <= 0.0 {
        return Err(Error::numeric(format!(
            "non-positive leaf denominator {}",
            sum_h + lambda
        )));
    }
    Ok(-sum_g / (sum_h + lambda))
}

/// Per-feature candidate thresholds, ascending and deduplicated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidates {
    pub per_feature: Vec<Vec<f64>>,
}

impl Candidates {
    /// `l` equi-probability quantiles of every column, computed once on the root instance set.
    pub fn quantiles(features: &FeatureMatrix, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::arg("need at least one candidate per feature"));
        }
        let per_feature = (0..features.cols())
            .map(|j| quantile_thresholds(&features.column(j), l))
            .collect();
        Ok(Self { per_feature })
    }

    pub fn total(&self) -> usize {
        self.per_feature.iter().map(Vec::len).sum()
    }

    /// For every row and feature, the index of the first threshold `>= value`;
    /// the row falls left under candidate `k` iff this index is `<= k`.
    pub(crate) fn buckets(&self, features: &FeatureMatrix) -> Vec<Vec<u32>> {
        self.per_feature
            .iter()
            .enumerate()
            .map(|(j, ts)| {
                (0..features.rows())
                    .map(|i| {
                        let v = features.get(i, j);
                        ts.partition_point(|&t| t < v) as u32
                    })
                    .collect()
            })
            .collect()
    }
}

fn quantile_thresholds(column: &[f64], l: usize) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out: Vec<f64> = (1..=l)
        .map(|k| {
            // ceil(k n / (l+1)) instances fall at or below the k-th threshold
            let rank = (k * n).div_ceil(l + 1).clamp(1, n);
            sorted[rank - 1]
        })
        .collect();
    out.dedup();
    out
}

/// Best `(feature, candidate)` pair at a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitChoice {
    pub score: f64,
    pub feature: usize,
    pub candidate: usize,
    pub threshold: f64,
}

/// Exhaustive reference search: every feature and candidate is scored from
/// scratch by comparing raw values against the threshold. Highest score wins,
/// ties go to the lower feature and then the lower candidate index, and a
/// split leaving either child empty scores `-inf`.
pub fn best_split_bruteforce(
    features: &FeatureMatrix,
    rows: &[usize],
    gp: &GradPair,
    candidates: &Candidates,
    lambda: f64,
    gamma: f64,
) -> Result<SplitChoice> {
    if candidates.total() == 0 {
        return Err(Error::arg("no candidates"));
    }
    if candidates.per_feature.len() != features.cols() {
        return Err(Error::arg(
            "candidate table does not match the feature count",
        ));
    }
    let (g, h) = gp.sums(rows);
    let mut best: Option<SplitChoice> = None;
    for (j, ts) in candidates.per_feature.iter().enumerate() {
        for (k, &t) in ts.iter().enumerate() {
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            for &r in rows {
                if features.get(r, j) <= t {
                    gl += gp.g[r];
                    hl += gp.h[r];
                    nl += 1;
                }
            }
            let score = if nl == 0 || nl == rows.len() {
                f64::NEG_INFINITY
            } else {
                gain_from_left(gl, hl, g, h, lambda, gamma)
            };
            if best.is_none_or(|b| beats(score, b.score)) {
                best = Some(SplitChoice {
                    score,
                    feature: j,
                    candidate: k,
                    threshold: t,
                });
            }
        }
    }
    Ok(best.expect("at least one candidate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn beats_treats_rounding_as_a_tie() {
        assert!(!beats(1.0 + 1e-13, 1.0));
        assert!(beats(1.0 + 1e-6, 1.0));
        assert!(beats(0.0, f64::NEG_INFINITY));
        assert!(!beats(f64::NEG_INFINITY, f64::NEG_INFINITY));
    }

    #[test]
    fn degenerate_all_left_is_minus_gamma() {
        let s = split_score(1.3, 2.0, 0.0, 0.0, 1.3, 2.0, 1.0, 0.7).unwrap();
        assert_abs_diff_eq!(s, -0.7, epsilon = 1e-15);
    }

    #[test]
    fn worked_three_instance_example() {
        // g=[0.5,-0.5,0.5], h=0.25 each, m=[1,1,0], λ=1, γ=0
        let s = split_score(0.0, 0.5, 0.5, 0.25, 0.5, 0.75, 1.0, 0.0).unwrap();
        let expected = 0.5 * (0.25 / 1.25 - 0.25 / 1.75);
        assert_abs_diff_eq!(s, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 0.0285714, epsilon = 1e-7);
    }

    #[test]
    fn zero_gradients_give_minus_gamma() {
        assert_eq!(
            split_score(0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 1.0, 1.0).unwrap(),
            -1.0
        );
    }

    #[test]
    fn score_errors() {
        assert!(matches!(
            split_score(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            split_score(1.0, 1.0, 1.0, 1.0, 5.0, 2.0, 1.0, 0.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn leaf_weights() {
        assert_eq!(leaf_weight(0.0, 3.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(leaf_weight(0.5, 0.25, 1.0).unwrap(), -0.4, epsilon = 1e-15);
        assert_eq!(leaf_weight(-1.0, 0.0, 1.0).unwrap(), 1.0);
        assert!(leaf_weight(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn quantiles_split_evenly_and_dedupe() {
        let col = [24.0, 25.0, 20.0, 22.0, 15.0, 17.0, 18.0, 16.0];
        assert_eq!(quantile_thresholds(&col, 1), vec![18.0]);
        assert_eq!(quantile_thresholds(&col, 3), vec![16.0, 18.0, 22.0]);
        assert_eq!(
            quantile_thresholds(&col, 100),
            vec![15.0, 16.0, 17.0, 18.0, 20.0, 22.0, 24.0, 25.0]
        );
        assert_eq!(quantile_thresholds(&[1.0, 1.0, 1.0], 4), vec![1.0]);
    }

    fn age_example(g: Vec<f64>, h: Vec<f64>) -> (FeatureMatrix, GradPair, Candidates) {
        let ages = [24.0, 25.0, 20.0, 22.0, 15.0, 17.0, 18.0, 16.0];
        let fm =
            FeatureMatrix::from_rows(&ages.iter().map(|&a| vec![a]).collect::<Vec<_>>()).unwrap();
        let gp = GradPair::new(g, h).unwrap();
        let cands = Candidates {
            per_feature: vec![vec![16.0, 18.0, 22.0]],
        };
        (fm, gp, cands)
    }

    #[test]
    fn age_vector_hand_argmax() {
        // Labels line up with age <= 18, so the 18 threshold separates the gradients perfectly.
        let g = vec![0.5, 0.5, 0.5, 0.5, -0.5, -0.5, -0.5, -0.5];
        let (fm, gp, cands) = age_example(g, vec![0.25; 8]);
        let rows: Vec<usize> = (0..8).collect();
        let best = best_split_bruteforce(&fm, &rows, &gp, &cands, 1.0, 0.0).unwrap();
        // hand scores: s=16 -> gl=-1 hl=.5 ; s=18 -> gl=-2 hl=1 ; s=22 -> gl=-1 hl=1.5
        let score = |gl: f64, hl: f64| {
            0.5 * (gl * gl / (hl + 1.0) + (0.0 - gl).powi(2) / (2.0 - hl + 1.0) - 0.0)
        };
        let hand = [score(-1.0, 0.5), score(-2.0, 1.0), score(-1.0, 1.5)];
        assert!(hand[1] > hand[0] && hand[1] > hand[2]);
        assert_eq!(best.candidate, 1);
        assert_eq!(best.threshold, 18.0);
        assert_abs_diff_eq!(best.score, hand[1], epsilon = 1e-15);
    }

    #[test]
    fn single_candidate_is_returned() {
        let (fm, gp, _) = age_example(vec![0.1; 8], vec![0.2; 8]);
        let cands = Candidates {
            per_feature: vec![vec![20.0]],
        };
        let best =
            best_split_bruteforce(&fm, &(0..8).collect::<Vec<_>>(), &gp, &cands, 1.0, 0.0).unwrap();
        assert_eq!((best.feature, best.candidate, best.threshold), (0, 0, 20.0));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // two identical columns -> identical scores on both features
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, i as f64]).collect();
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        let gp = GradPair::new(vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0], vec![0.25; 6]).unwrap();
        let cands = Candidates {
            per_feature: vec![vec![2.0, 2.5], vec![2.0, 2.5]],
        };
        let best =
            best_split_bruteforce(&fm, &(0..6).collect::<Vec<_>>(), &gp, &cands, 1.0, 0.0).unwrap();
        assert_eq!((best.feature, best.candidate), (0, 0));
    }
}
