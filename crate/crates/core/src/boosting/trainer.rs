use serde::{Deserialize, Serialize};

use super::histogram::{GradStats, NodeHistogram};
use super::local::LocalLearner;
use super::model::{Tree, TreeModel, TreeNode};
use super::params::Hyperparameters;
use super::split::{find_best_split, leaf_weight};
use crate::dataset::DatasetMatrix;
use crate::error::{Error, Result};
use crate::sketch::FeatureSketchSet;

/// Index of a node in [`Tree::nodes`].
pub type NodeId = usize;

/// Supplies histograms for the open nodes of a partially grown tree.
///
/// The centralized trainer computes them from its own rows; the federated
/// aggregator queries every party and merges their replies.
pub trait HistogramSource {
    /// Histograms for `open`, in the same order. Open nodes are `Leaf`
    /// placeholders in `tree`.
    fn histograms(&mut self, tree: &Tree, open: &[NodeId]) -> Result<Vec<NodeHistogram>>;
}

/// Federation-wide label mean `sum(Y_p) / sum(n_p)`.
pub fn null_model(party_sums: &[(f64, u64)]) -> Result<f64> {
    let n: u64 = party_sums.iter().map(|(_, n)| n).sum();
    if n == 0 {
        return Err(Error::EmptyFederation);
    }
    let y: f64 = party_sums.iter().map(|(y, _)| y).sum();
    Ok(y / n as f64)
}

/// Element-wise [`null_model`] for per-class label sums.
pub fn class_prevalence(party_sums: &[(Vec<f64>, u64)]) -> Result<Vec<f64>> {
    let width = party_sums.first().map_or(0, |(y, _)| y.len());
    if party_sums.iter().any(|(y, _)| y.len() != width) {
        return Err(Error::Schema(
            "parties report different label widths".into(),
        ));
    }
    (0..width)
        .map(|k| {
            let column: Vec<(f64, u64)> = party_sums.iter().map(|(y, n)| (y[k], *n)).collect();
            null_model(&column)
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::EmptyFederation)
            } else {
                Ok(v)
            }
        })
}

/// Grows one tree level by level. Each level asks `source` for the histograms
/// of every node that may still split; nodes at `max_depth`, nodes without a
/// positive-gain split, and nodes too small to split become leaves.
pub fn grow_tree<S: HistogramSource + ?Sized>(
    source: &mut S,
    class: usize,
    candidates: &[Vec<f64>],
    params: &Hyperparameters,
) -> Result<Tree> {
    let mut tree = Tree::leaf(class, 0.0);
    let mut frontier: Vec<(NodeId, usize, Option<GradStats>)> = vec![(0, 1, None)];
    while !frontier.is_empty() {
        let can_split = |depth: usize, totals: &Option<GradStats>| {
            depth < params.max_depth
                && totals.map_or(true, |t| t.count >= 2 * params.min_child_count)
        };
        let query: Vec<NodeId> = frontier
            .iter()
            .filter(|(_, depth, totals)| totals.is_none() || can_split(*depth, totals))
            .map(|(node, _, _)| *node)
            .collect();
        let mut histograms = if query.is_empty() {
            Vec::new()
        } else {
            source.histograms(&tree, &query)?
        };
        if histograms.len() != query.len()
            || histograms.iter().zip(&query).any(|(h, &q)| h.node != q)
        {
            return Err(Error::Protocol(
                "histogram reply does not match the requested nodes".into(),
            ));
        }
        histograms.reverse();

        let mut next = Vec::new();
        for (node, depth, totals) in frontier {
            let hist = if query.contains(&node) {
                histograms.pop()
            } else {
                None
            };
            let totals = totals
                .or_else(|| hist.as_ref().map(|h| h.total))
                .expect("queried nodes have histograms");
            let decision = match &hist {
                Some(h) if can_split(depth, &Some(totals)) => {
                    find_best_split(h, candidates, params)
                }
                _ => None,
            };
            match decision {
                Some(d) => {
                    let left = tree.nodes.len();
                    tree.nodes.push(TreeNode::Leaf { weight: 0.0 });
                    tree.nodes.push(TreeNode::Leaf { weight: 0.0 });
                    tree.nodes[node] = TreeNode::Split {
                        feature: d.feature,
                        threshold: d.threshold,
                        default: d.default,
                        left,
                        right: left + 1,
                    };
                    next.push((left, depth + 1, Some(d.left)));
                    next.push((left + 1, depth + 1, Some(d.right)));
                }
                None => {
                    tree.nodes[node] = TreeNode::Leaf {
                        weight: leaf_weight(totals.grad, totals.hess, params),
                    };
                }
            }
        }
        frontier = next;
    }
    Ok(tree)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    /// Mean training loss after the round's trees were added.
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub model: TreeModel,
    pub candidates: Vec<Vec<f64>>,
    pub log: Vec<RoundLog>,
}

/// Histogram boosting over a single data holder's rows: sketch, candidates,
/// then `rounds` rounds of level-wise tree growth.
pub fn train_centralized(
    data: &DatasetMatrix,
    params: &Hyperparameters,
) -> Result<TrainingOutcome> {
    params.validate()?;
    let mut learner = LocalLearner::new(data.clone());
    let task = data.task();
    let m = data.num_features();

    let prevalence = class_prevalence(&[learner.label_sums()])?;
    let mut model = TreeModel::null(task, m, prevalence, params.eta);

    let mut sketches = FeatureSketchSet::empty(m, params.relative_error)?;
    sketches.merge(&learner.sketch(params.relative_error)?)?;
    let candidates = sketches.split_candidates(params.max_bins);
    learner.set_candidates(&candidates)?;
    learner.sync_model(&model)?;

    let mut log = Vec::with_capacity(params.rounds);
    for round in 1..=params.rounds {
        learner.begin_round();
        let mut trees = Vec::with_capacity(task.num_outputs());
        for class in 0..task.num_outputs() {
            trees.push(grow_tree(&mut learner, class, &candidates, params)?);
        }
        model.trees.extend(trees);
        learner.sync_model(&model)?;
        let (loss, n) = learner.loss_sum();
        log.push(RoundLog {
            round,
            train_loss: loss / n as f64,
        });
    }
    Ok(TrainingOutcome {
        model,
        candidates,
        log,
    })
}
