use super::histogram::{BinnedMatrix, NodeHistogram};
use super::loss::{GradPair, LossFunction};
use super::model::{Tree, TreeModel};
use super::trainer::{HistogramSource, NodeId};
use crate::dataset::{DatasetMatrix, Task};
use crate::error::{Error, Result};
use crate::sketch::FeatureSketchSet;

/// Row-level state of one data holder: raw rows, cached margins, and the
/// gradients of the current round. Only aggregates leave this type.
#[derive(Debug, Clone)]
pub struct LocalLearner {
    data: DatasetMatrix,
    loss: LossFunction,
    binned: Option<BinnedMatrix>,
    model: Option<TreeModel>,
    margins: Vec<f64>,
    pairs: Vec<Vec<GradPair>>,
}

impl LocalLearner {
    pub fn new(data: DatasetMatrix) -> Self {
        let loss = LossFunction::for_task(data.task());
        Self {
            data,
            loss,
            binned: None,
            model: None,
            margins: Vec::new(),
            pairs: Vec::new(),
        }
    }

    pub fn data(&self) -> &DatasetMatrix {
        &self.data
    }

    pub fn task(&self) -> Task {
        self.data.task()
    }

    pub fn model(&self) -> Option<&TreeModel> {
        self.model.as_ref()
    }

    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    /// `(Y_p, n_p)`: the sum of the (one-hot, for multiclass) labels and the row count.
    pub fn label_sums(&self) -> (Vec<f64>, u64) {
        let sums = match self.task() {
            Task::Binary => vec![self.data.labels().iter().map(|&y| f64::from(y)).sum()],
            Task::Multiclass(_) => self
                .data
                .label_histogram()
                .into_iter()
                .map(|c| c as f64)
                .collect(),
        };
        (sums, self.data.num_rows() as u64)
    }

    pub fn sketch(&self, relative_error: f64) -> Result<FeatureSketchSet> {
        FeatureSketchSet::from_rows(self.data.rows(), self.data.num_features(), relative_error)
    }

    pub fn set_candidates(&mut self, candidates: &[Vec<f64>]) -> Result<()> {
        self.binned = Some(BinnedMatrix::new(&self.data, candidates)?);
        Ok(())
    }

    /// Adopts `model`, updating cached margins incrementally when `model`
    /// extends the current one.
    pub fn sync_model(&mut self, model: &TreeModel) -> Result<()> {
        if model.num_features != self.data.num_features() {
            return Err(Error::Shape {
                expected: self.data.num_features(),
                actual: model.num_features,
            });
        }
        if model.task != self.task() {
            return Err(Error::Schema(format!(
                "model task {:?} does not match local task {:?}",
                model.task,
                self.task()
            )));
        }
        let k = model.num_outputs();
        let applied = match &self.model {
            Some(old)
                if old.base_margin == model.base_margin
                    && old.eta == model.eta
                    && model.trees.len() >= old.trees.len()
                    && model.trees[..old.trees.len()] == old.trees[..] =>
            {
                old.trees.len()
            }
            _ => {
                self.margins = model
                    .base_margin
                    .iter()
                    .copied()
                    .cycle()
                    .take(self.data.num_rows() * k)
                    .collect();
                0
            }
        };
        let fresh = &model.trees[applied..];
        if !fresh.is_empty() {
            for (i, margins) in self.margins.chunks_mut(k).enumerate() {
                model.accumulate(fresh, self.data.row(i), margins);
            }
        }
        self.model = Some(model.clone());
        Ok(())
    }

    /// Recomputes gradients and Hessians from the current margins.
    pub fn begin_round(&mut self) {
        let k = self.loss.num_outputs();
        let n = self.data.num_rows();
        let mut pairs = vec![vec![GradPair::default(); n]; k];
        let mut scratch = vec![GradPair::default(); k];
        for (i, margins) in self.margins.chunks(k).enumerate() {
            self.loss
                .grad_hess(margins, self.data.labels()[i], &mut scratch);
            for (class, pair) in scratch.iter().enumerate() {
                pairs[class][i] = *pair;
            }
        }
        self.pairs = pairs;
    }

    /// Per-node histograms of the rows that currently sit in `open` leaves of `tree`.
    pub fn node_histograms(&self, tree: &Tree, open: &[NodeId]) -> Result<Vec<NodeHistogram>> {
        let binned = self
            .binned
            .as_ref()
            .ok_or_else(|| Error::Protocol("histogram requested before split candidates".into()))?;
        let pairs = self
            .pairs
            .get(tree.class)
            .ok_or_else(|| Error::Protocol(format!("no gradients for class {}", tree.class)))?;
        let mut slot = vec![usize::MAX; tree.nodes.len()];
        for (i, &node) in open.iter().enumerate() {
            if node >= tree.nodes.len() {
                return Err(Error::Protocol(format!("open node {node} not in tree")));
            }
            slot[node] = i;
        }
        let mut groups: Vec<(usize, Vec<usize>)> = open.iter().map(|&n| (n, Vec::new())).collect();
        for (i, row) in self.data.rows().enumerate() {
            let s = slot[tree.leaf_index(row)];
            if s != usize::MAX {
                groups[s].1.push(i);
            }
        }
        Ok(binned.build(pairs, &groups))
    }

    /// Summed loss over local rows under the current margins, and the row count.
    pub fn loss_sum(&self) -> (f64, u64) {
        let k = self.loss.num_outputs();
        let total = self
            .margins
            .chunks(k)
            .zip(self.data.labels())
            .map(|(m, &y)| self.loss.loss(m, y))
            .sum();
        (total, self.data.num_rows() as u64)
    }
}

impl HistogramSource for LocalLearner {
    fn histograms(&mut self, tree: &Tree, open: &[NodeId]) -> Result<Vec<NodeHistogram>> {
        self.node_histograms(tree, open)
    }
}
