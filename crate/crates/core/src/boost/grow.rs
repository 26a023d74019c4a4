use std::collections::VecDeque;

use crate::error::Result;

use super::loss::GradPair;
use super::split::leaf_weight;
use super::tree::{Node, Owner, Tree};

pub(crate) struct NodeContext<'a> {
    pub tree: usize,
    pub node: usize,
    pub rows: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum SplitRule {
    Local { feature: usize, threshold: f64 },
    Remote { handle: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitDecision {
    pub score: f64,
    pub rule: SplitRule,
}

/// Source of split decisions for the shared tree grower.
pub(crate) trait SplitSearch {
    /// Best split for the node, or `None` when no candidate has a finite score.
    fn best_split(&mut self, ctx: &NodeContext<'_>, gp: &GradPair)
        -> Result<Option<SplitDecision>>;

    /// Order-preserving `(left, right)` partition of `rows` under `rule`.
    fn partition(&self, rule: &SplitRule, rows: &[usize]) -> Result<(Vec<usize>, Vec<usize>)>;

    /// Called before each tree; `false` ends boosting.
    fn begin_tree(&mut self, _tree: usize) -> Result<bool> {
        Ok(true)
    }

    /// Called before the first node of each depth level; `false` stops growth at this level.
    fn begin_level(&mut self, _tree: usize, _depth: usize) -> Result<bool> {
        Ok(true)
    }
}

pub(crate) struct GrownTree {
    pub tree: Tree,
    /// `(leaf weight, rows)` for each leaf, for margin updates.
    pub leaves: Vec<(f64, Vec<usize>)>,
}

/// Breadth-first growth: a node splits iff its best score is strictly positive and the
/// depth limit allows it. Node ids follow BFS order.
pub(crate) fn grow_tree<S: SplitSearch>(
    search: &mut S,
    tree_idx: usize,
    gp: &GradPair,
    rows: Vec<usize>,
    max_depth: usize,
    lambda: f64,
) -> Result<GrownTree> {
    let mut nodes: Vec<Option<Node>> = vec![None];
    let mut leaves = Vec::new();
    let mut queue = VecDeque::from([(0usize, rows, 0usize)]);
    let mut open_level = None;
    let mut level_allowed = true;

    while let Some((id, rows, depth)) = queue.pop_front() {
        let mut decision = None;
        if depth < max_depth && rows.len() >= 2 {
            if open_level != Some(depth) {
                open_level = Some(depth);
                level_allowed = search.begin_level(tree_idx, depth)?;
            }
            if level_allowed {
                let ctx = NodeContext {
                    tree: tree_idx,
                    node: id,
                    rows: &rows,
                };
                decision = search.best_split(&ctx, gp)?.filter(|d| d.score > 0.0);
            }
        }
        let split = match decision {
            Some(d) => {
                let (l, r) = search.partition(&d.rule, &rows)?;
                (!l.is_empty() && !r.is_empty()).then_some((d, l, r))
            }
            None => None,
        };
        match split {
            Some((d, l, r)) => {
                let left = nodes.len();
                nodes.push(None);
                nodes.push(None);
                let node = match d.rule {
                    SplitRule::Local { feature, threshold } => Node {
                        owner: Owner::Ap,
                        feature: Some(feature),
                        threshold: Some(threshold),
                        pp_handle: None,
                        left: Some(left),
                        right: Some(left + 1),
                        weight: None,
                    },
                    SplitRule::Remote { handle } => Node {
                        owner: Owner::Pp,
                        feature: None,
                        threshold: None,
                        pp_handle: Some(handle),
                        left: Some(left),
                        right: Some(left + 1),
                        weight: None,
                    },
                };
                nodes[id] = Some(node);
                queue.push_back((left, l, depth + 1));
                queue.push_back((left + 1, r, depth + 1));
            }
            None => {
                let (g, h) = gp.sums(&rows);
                let w = leaf_weight(g, h, lambda)?;
                nodes[id] = Some(Node::leaf(w));
                leaves.push((w, rows));
            }
        }
    }
    let nodes = nodes
        .into_iter()
        .map(|n| n.expect("every queued node is resolved"))
        .collect();
    Ok(GrownTree {
        tree: Tree { nodes },
        leaves,
    })
}
