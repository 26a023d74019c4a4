use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

use super::loss::sigmoid;

pub const MODEL_VERSION: u32 = 1;

/// Which party holds the feature a node splits on.
/// Feature, threshold bits, left child, right child and leaf weight bits of one node.
pub type NodeShape = (
    Option<usize>,
    Option<u64>,
    Option<usize>,
    Option<usize>,
    Option<u64>,
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Owner {
    Ap,
    Pp,
}

/// One tree node. Internal AP nodes carry `(feature, threshold)`; internal PP
/// nodes carry only the opaque `pp_handle`; leaves carry `weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub owner: Owner,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pp_handle: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl Node {
    pub fn leaf(weight: f64) -> Self {
        Self {
            owner: Owner::Ap,
            feature: None,
            threshold: None,
            pp_handle: None,
            left: None,
            right: None,
            weight: Some(weight),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.left.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// The passive party's private map from opaque handles to `(feature, threshold)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HandleTable {
    pub entries: BTreeMap<u64, (usize, f64)>,
}

impl HandleTable {
    pub fn resolve(&self, handle: u64) -> Result<(usize, f64)> {
        self.entries
            .get(&handle)
            .copied()
            .ok_or_else(|| Error::Schema(format!("unknown passive-party handle {handle}")))
    }
}

/// Boosted ensemble. Leaf weights are stored unscaled; the margin of an instance is
/// `initial_margin + eta * sum(leaf weights)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub version: u32,
    pub eta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub depth: usize,
    pub initial_margin: f64,
    #[serde(default)]
    pub rounds: usize,
    pub trees: Vec<Tree>,
}

impl TreeModel {
    pub fn empty(eta: f64, lambda: f64, gamma: f64, depth: usize, rounds: usize) -> Self {
        Self {
            version: MODEL_VERSION,
            eta,
            lambda,
            gamma,
            depth,
            initial_margin: 0.0,
            rounds,
            trees: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model version {}",
                model.version
            )));
        }
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (t, tree) in self.trees.iter().enumerate() {
            for (i, node) in tree.nodes.iter().enumerate() {
                match (node.left, node.right) {
                    (None, None) => {
                        if !node.weight.is_some_and(f64::is_finite) {
                            return Err(Error::Schema(format!(
                                "tree {t} leaf {i} lacks a finite weight"
                            )));
                        }
                    }
                    (Some(l), Some(r)) => {
                        if l >= tree.nodes.len() || r >= tree.nodes.len() || l <= i || r <= i {
                            return Err(Error::Schema(format!(
                                "tree {t} node {i} has bad children"
                            )));
                        }
                        let ok = match node.owner {
                            Owner::Ap => node.feature.is_some() && node.threshold.is_some(),
                            Owner::Pp => {
                                node.pp_handle.is_some()
                                    || (node.feature.is_some() && node.threshold.is_some())
                            }
                        };
                        if !ok {
                            return Err(Error::Schema(format!(
                                "tree {t} node {i} lacks a split rule"
                            )));
                        }
                    }
                    _ => return Err(Error::Schema(format!("tree {t} node {i} has one child"))),
                }
            }
        }
        Ok(())
    }

    /// Raw margins. PP-owned handles are resolved through `pp`, which pairs the
    /// passive party's features with its handle table.
    pub fn predict_margin(
        &self,
        ap: &FeatureMatrix,
        pp: Option<(&FeatureMatrix, &HandleTable)>,
    ) -> Result<Vec<f64>> {
        if let Some((pf, _)) = pp {
            if pf.rows() != ap.rows() {
                return Err(Error::Schema(
                    "party feature matrices differ in row count".into(),
                ));
            }
        }
        (0..ap.rows())
            .map(|i| {
                let mut sum = 0.0;
                for tree in &self.trees {
                    sum += leaf_for(tree, i, ap, pp)?;
                }
                Ok(self.initial_margin + self.eta * sum)
            })
            .collect()
    }

    pub fn predict(
        &self,
        ap: &FeatureMatrix,
        pp: Option<(&FeatureMatrix, &HandleTable)>,
    ) -> Result<Vec<f64>> {
        Ok(self
            .predict_margin(ap, pp)?
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    /// Rewrites every PP handle as a concrete split on the merged feature space
    /// (AP columns first, then PP columns offset by `ap_features`).
    pub fn resolve_handles(&self, handles: &HandleTable, ap_features: usize) -> Result<Self> {
        let mut out = self.clone();
        for tree in &mut out.trees {
            for node in &mut tree.nodes {
                if node.owner == Owner::Pp {
                    if let Some(h) = node.pp_handle.take() {
                        let (f, t) = handles.resolve(h)?;
                        node.feature = Some(ap_features + f);
                        node.threshold = Some(t);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Split rules and leaf weights of every tree, ignoring ownership.
    pub fn structure(&self) -> Vec<Vec<NodeShape>> {
        self.trees
            .iter()
            .map(|t| {
                t.nodes
                    .iter()
                    .map(|n| {
                        (
                            n.feature,
                            n.threshold.map(f64::to_bits),
                            n.left,
                            n.right,
                            n.weight.map(f64::to_bits),
                        )
                    })
                    .collect()
            })
            .collect()
    }
}

fn leaf_for(
    tree: &Tree,
    row: usize,
    ap: &FeatureMatrix,
    pp: Option<(&FeatureMatrix, &HandleTable)>,
) -> Result<f64> {
    let mut idx = 0;
    loop {
        let node = tree
            .nodes
            .get(idx)
            .ok_or_else(|| Error::Schema("dangling node index".into()))?;
        let (Some(l), Some(r)) = (node.left, node.right) else {
            return node
                .weight
                .ok_or_else(|| Error::Schema("leaf without weight".into()));
        };
        let value = match (node.owner, node.pp_handle) {
            (Owner::Pp, Some(h)) => {
                let (pf, table) = pp.ok_or_else(|| {
                    Error::Schema("passive-party split without passive features".into())
                })?;
                let (f, t) = table.resolve(h)?;
                if f >= pf.cols() {
                    return Err(Error::Schema(format!("missing passive feature column {f}")));
                }
                pf.get(row, f) <= t
            }
            _ => {
                let f = node
                    .feature
                    .ok_or_else(|| Error::Schema("split without feature".into()))?;
                let t = node
                    .threshold
                    .ok_or_else(|| Error::Schema("split without threshold".into()))?;
                if f >= ap.cols() {
                    return Err(Error::Schema(format!("missing feature column {f}")));
                }
                ap.get(row, f) <= t
            }
        };
        idx = if value { l } else { r };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn split(feature: usize, threshold: f64, left: usize, right: usize) -> Node {
        Node {
            owner: Owner::Ap,
            feature: Some(feature),
            threshold: Some(threshold),
            pp_handle: None,
            left: Some(left),
            right: Some(right),
            weight: None,
        }
    }

    #[test]
    fn empty_ensemble_predicts_half() {
        let m = TreeModel::empty(0.3, 1.0, 0.0, 3, 10);
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(m.predict(&x, None).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn single_leaf() {
        let mut m = TreeModel::empty(0.3, 1.0, 0.0, 0, 1);
        m.trees.push(Tree {
            nodes: vec![Node::leaf(2.0)],
        });
        let x = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert_abs_diff_eq!(
            m.predict(&x, None).unwrap()[0],
            sigmoid(0.6),
            epsilon = 1e-15
        );
    }

    #[test]
    fn two_tree_hand_walk() {
        let mut m = TreeModel::empty(0.5, 1.0, 0.0, 1, 2);
        m.trees.push(Tree {
            nodes: vec![split(0, 1.0, 1, 2), Node::leaf(-1.0), Node::leaf(2.0)],
        });
        let mut pp_node = split(0, 0.0, 1, 2);
        pp_node.owner = Owner::Pp;
        pp_node.feature = None;
        pp_node.threshold = None;
        pp_node.pp_handle = Some(7);
        m.trees.push(Tree {
            nodes: vec![pp_node, Node::leaf(0.4), Node::leaf(-0.6)],
        });
        let ap = FeatureMatrix::from_rows(&[vec![3.0]]).unwrap();
        let pp = FeatureMatrix::from_rows(&[vec![5.0, -2.0]]).unwrap();
        let mut table = HandleTable::default();
        table.entries.insert(7, (1, -1.0));
        // tree 1: 3 > 1 -> right (2.0); tree 2: pp[1] = -2 <= -1 -> left (0.4)
        let margin = m.predict_margin(&ap, Some((&pp, &table))).unwrap()[0];
        assert_abs_diff_eq!(margin, 0.5 * (2.0 + 0.4), epsilon = 1e-15);
        assert!(m.predict_margin(&ap, None).is_err());

        let json = m.to_json().unwrap();
        assert_eq!(TreeModel::from_json(&json).unwrap(), m);
        let resolved = m.resolve_handles(&table, 1).unwrap();
        assert_eq!(resolved.trees[1].nodes[0].feature, Some(2));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let mut m = TreeModel::empty(0.5, 1.0, 0.0, 1, 1);
        m.trees.push(Tree {
            nodes: vec![split(3, 1.0, 1, 2), Node::leaf(-1.0), Node::leaf(2.0)],
        });
        let x = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(matches!(m.predict(&x, None), Err(Error::Schema(_))));
    }

    #[test]
    fn json_rejects_one_child_nodes() {
        let mut m = TreeModel::empty(0.5, 1.0, 0.0, 1, 1);
        let mut bad = split(0, 1.0, 1, 2);
        bad.right = None;
        m.trees.push(Tree {
            nodes: vec![bad, Node::leaf(1.0)],
        });
        let json = serde_json::to_string(&m).unwrap();
        assert!(TreeModel::from_json(&json).is_err());
    }
}
