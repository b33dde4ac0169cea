use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::LossFunction;
use crate::dataset::Task;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "fedxgb.model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Side taken by rows whose split feature is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TreeNode {
    /// Rows with `value <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        default: Direction,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// A regression tree stored as a node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Output (class) this tree contributes to.
    pub class: usize,
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(class: usize, weight: f64) -> Self {
        Self {
            class,
            nodes: vec![TreeNode::Leaf { weight }],
        }
    }

    /// Index of the leaf `row` lands in.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut at = 0;
        while let TreeNode::Split {
            feature,
            threshold,
            default,
            left,
            right,
        } = &self.nodes[at]
        {
            let value = row[*feature];
            let go_left = if value.is_nan() {
                *default == Direction::Left
            } else {
                value <= *threshold
            };
            at = if go_left { *left } else { *right };
        }
        at
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { weight } => weight,
            TreeNode::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    /// Number of node levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// Additive ensemble: `margin[c] = base_margin[c] + eta * sum of class-c tree outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct TreeModel {
    pub task: Task,
    pub num_features: usize,
    /// Federation-wide label means (positive rate, or per-class frequency).
    pub base_score: Vec<f64>,
    pub base_margin: Vec<f64>,
    pub eta: f64,
    pub trees: Vec<Tree>,
}

impl TreeModel {
    /// The null model for the given label means.
    pub fn null(task: Task, num_features: usize, base_score: Vec<f64>, eta: f64) -> Self {
        let base_margin = LossFunction::for_task(task).base_margins(&base_score);
        Self {
            task,
            num_features,
            base_score,
            base_margin,
            eta,
            trees: Vec::new(),
        }
    }

    pub fn num_outputs(&self) -> usize {
        self.task.num_outputs()
    }

    /// Adds the tree contributions to `margins` in tree order.
    pub fn accumulate(&self, trees: &[Tree], row: &[f64], margins: &mut [f64]) {
        for tree in trees {
            margins[tree.class] += self.eta * tree.predict(row);
        }
    }

    pub fn predict_margin(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.num_features {
            return Err(Error::Shape {
                expected: self.num_features,
                actual: row.len(),
            });
        }
        let mut margins = self.base_margin.clone();
        self.accumulate(&self.trees, row, &mut margins);
        Ok(margins)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// SHA-256 of the serialized model, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    format: String,
    version: u32,
    task: Task,
    num_class: usize,
    num_features: usize,
    base_score: Vec<f64>,
    base_margin: Vec<f64>,
    eta: f64,
    trees: Vec<Tree>,
}

impl From<TreeModel> for ModelRecord {
    fn from(m: TreeModel) -> Self {
        ModelRecord {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            task: m.task,
            num_class: m.task.num_classes(),
            num_features: m.num_features,
            base_score: m.base_score,
            base_margin: m.base_margin,
            eta: m.eta,
            trees: m.trees,
        }
    }
}

impl TryFrom<ModelRecord> for TreeModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        if r.format != MODEL_FORMAT || r.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("{} v{}", r.format, r.version)));
        }
        let outputs = r.task.num_outputs();
        if r.num_class != r.task.num_classes() || r.base_margin.len() != outputs {
            return Err(Error::Format("class count does not match the task".into()));
        }
        for tree in &r.trees {
            if tree.class >= outputs || tree.nodes.is_empty() {
                return Err(Error::Format(format!(
                    "malformed tree for class {}",
                    tree.class
                )));
            }
            for node in &tree.nodes {
                if let TreeNode::Split {
                    feature,
                    left,
                    right,
                    ..
                } = node
                {
                    if *feature >= r.num_features
                        || *left >= tree.nodes.len()
                        || *right >= tree.nodes.len()
                    {
                        return Err(Error::Format("split references out of range".into()));
                    }
                }
            }
        }
        Ok(TreeModel {
            task: r.task,
            num_features: r.num_features,
            base_score: r.base_score,
            base_margin: r.base_margin,
            eta: r.eta,
            trees: r.trees,
        })
    }
}
