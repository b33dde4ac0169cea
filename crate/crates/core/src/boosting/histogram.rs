//! Gradient/Hessian histograms over candidate buckets.
//!
//! With thresholds `t_0 < t_1 < ... < t_{L-1}` a value lands in the first
//! bucket `b` with `value <= t_b`, or in the overflow bucket `L`. Histograms
//! are sparse: only non-empty buckets are stored, in ascending order.

use serde::{Deserialize, Serialize};

use super::loss::GradPair;
use crate::dataset::DatasetMatrix;
use crate::error::{Error, Result};

/// Bucket id used for missing values in a [`BinnedMatrix`].
pub const MISSING_BIN: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GradStats {
    pub grad: f64,
    pub hess: f64,
    pub count: u64,
}

impl GradStats {
    pub fn add_pair(&mut self, pair: GradPair) {
        self.grad += pair.grad;
        self.hess += pair.hess;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &GradStats) {
        self.grad += other.grad;
        self.hess += other.hess;
        self.count += other.count;
    }

    pub fn minus(&self, other: &GradStats) -> GradStats {
        GradStats {
            grad: self.grad - other.grad,
            hess: self.hess - other.hess,
            count: self.count - other.count,
        }
    }
}

/// Non-empty buckets of one feature plus the rows whose value is missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureHistogram {
    pub bins: Vec<(u16, GradStats)>,
    #[serde(default)]
    pub missing: GradStats,
}

impl FeatureHistogram {
    pub fn total(&self) -> GradStats {
        let mut total = GradStats::default();
        for (_, s) in &self.bins {
            total.merge(s);
        }
        total.merge(&self.missing);
        total
    }

    /// Bucket-wise sum with `other`.
    pub fn merge(&mut self, other: &FeatureHistogram) {
        let mut merged = Vec::with_capacity(self.bins.len().max(other.bins.len()));
        let (mut a, mut b) = (self.bins.iter().peekable(), other.bins.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(ia, sa)), Some(&&(ib, sb))) => {
                    if ia == ib {
                        let mut s = sa;
                        s.merge(&sb);
                        merged.push((ia, s));
                        a.next();
                        b.next();
                    } else if ia < ib {
                        merged.push((ia, sa));
                        a.next();
                    } else {
                        merged.push((ib, sb));
                        b.next();
                    }
                }
                (Some(&&x), None) => {
                    merged.push(x);
                    a.next();
                }
                (None, Some(&&x)) => {
                    merged.push(x);
                    b.next();
                }
                (None, None) => break,
            }
        }
        self.bins = merged;
        self.missing.merge(&other.missing);
    }
}

/// Histograms of every feature for the rows in one tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeHistogram {
    pub node: usize,
    pub total: GradStats,
    pub features: Vec<FeatureHistogram>,
}

impl NodeHistogram {
    pub fn empty(node: usize, num_features: usize) -> Self {
        Self {
            node,
            total: GradStats::default(),
            features: vec![FeatureHistogram::default(); num_features],
        }
    }

    pub fn merge(&mut self, other: &NodeHistogram) -> Result<()> {
        if self.node != other.node || self.features.len() != other.features.len() {
            return Err(Error::Protocol(format!(
                "cannot merge histogram of node {} ({} features) into node {} ({} features)",
                other.node,
                other.features.len(),
                self.node,
                self.features.len()
            )));
        }
        self.total.merge(&other.total);
        for (mine, theirs) in self.features.iter_mut().zip(&other.features) {
            mine.merge(theirs);
        }
        Ok(())
    }

    /// Every feature accounts for every row of the node.
    pub fn is_consistent(&self, tolerance: f64) -> bool {
        self.features.iter().all(|f| {
            let t = f.total();
            t.count == self.total.count
                && (t.grad - self.total.grad).abs() <= tolerance
                && (t.hess - self.total.hess).abs() <= tolerance
        })
    }
}

/// Per-node histograms for one growth step (the party -> aggregator payload).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradHessHistogram {
    pub nodes: Vec<NodeHistogram>,
}

impl GradHessHistogram {
    /// Element-wise sum; both sides must cover the same nodes in the same order.
    pub fn merge(&mut self, other: &GradHessHistogram) -> Result<()> {
        if self.nodes.len() != other.nodes.len() {
            return Err(Error::Protocol(format!(
                "histogram covers {} nodes, expected {}",
                other.nodes.len(),
                self.nodes.len()
            )));
        }
        for (mine, theirs) in self.nodes.iter_mut().zip(&other.nodes) {
            mine.merge(theirs)?;
        }
        Ok(())
    }
}

/// Bucket of `value` given ascending `thresholds`.
pub fn bin_index(value: f64, thresholds: &[f64]) -> u16 {
    thresholds.partition_point(|&t| t < value) as u16
}

/// Feature values replaced by bucket ids for a fixed set of candidates.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    bins: Vec<u16>,
    num_features: usize,
    offsets: Vec<usize>,
}

impl BinnedMatrix {
    pub fn new(data: &DatasetMatrix, candidates: &[Vec<f64>]) -> Result<Self> {
        let m = data.num_features();
        if candidates.len() != m {
            return Err(Error::Shape {
                expected: m,
                actual: candidates.len(),
            });
        }
        if let Some(c) = candidates
            .iter()
            .find(|c| c.len() >= usize::from(MISSING_BIN))
        {
            return Err(Error::Config(format!(
                "{} candidates exceed the bucket id range",
                c.len()
            )));
        }
        let mut bins = Vec::with_capacity(data.num_rows() * m);
        for row in data.rows() {
            for (value, thresholds) in row.iter().zip(candidates) {
                bins.push(if value.is_nan() {
                    MISSING_BIN
                } else {
                    bin_index(*value, thresholds)
                });
            }
        }
        let mut offsets = Vec::with_capacity(m + 1);
        let mut at = 0;
        for c in candidates {
            offsets.push(at);
            at += c.len() + 1;
        }
        offsets.push(at);
        Ok(Self {
            bins,
            num_features: m,
            offsets,
        })
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn bin(&self, row: usize, feature: usize) -> u16 {
        self.bins[row * self.num_features + feature]
    }

    /// Histograms for each `(node, rows)` group, accumulating rows in the given order.
    pub fn build(&self, pairs: &[GradPair], groups: &[(usize, Vec<usize>)]) -> Vec<NodeHistogram> {
        let m = self.num_features;
        let mut scratch = vec![GradStats::default(); *self.offsets.last().unwrap_or(&0)];
        let mut touched: Vec<usize> = Vec::new();
        groups
            .iter()
            .map(|(node, rows)| {
                let mut hist = NodeHistogram::empty(*node, m);
                for &r in rows {
                    let pair = pairs[r];
                    hist.total.add_pair(pair);
                    let row_bins = &self.bins[r * m..(r + 1) * m];
                    for (f, &b) in row_bins.iter().enumerate() {
                        if b == MISSING_BIN {
                            hist.features[f].missing.add_pair(pair);
                        } else {
                            let slot = self.offsets[f] + usize::from(b);
                            if scratch[slot].count == 0 {
                                touched.push(slot);
                            }
                            scratch[slot].add_pair(pair);
                        }
                    }
                }
                touched.sort_unstable();
                let mut f = 0;
                for &slot in &touched {
                    while slot >= self.offsets[f + 1] {
                        f += 1;
                    }
                    let bin = (slot - self.offsets[f]) as u16;
                    hist.features[f].bins.push((bin, scratch[slot]));
                    scratch[slot] = GradStats::default();
                }
                touched.clear();
                hist
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Task;

    #[test]
    fn bucket_convention() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(bin_index(0.5, &t), 0);
        assert_eq!(bin_index(1.0, &t), 0);
        assert_eq!(bin_index(1.5, &t), 1);
        assert_eq!(bin_index(3.0, &t), 2);
        assert_eq!(bin_index(3.5, &t), 3);
        assert_eq!(bin_index(7.0, &[]), 0);
    }

    #[test]
    fn build_and_merge() {
        let rows = vec![
            vec![0.5, f64::NAN],
            vec![1.5, 1.0],
            vec![2.5, 2.0],
            vec![0.1, 9.0],
        ];
        let d = DatasetMatrix::from_rows(&rows, vec![0, 1, 0, 1], Task::Binary).unwrap();
        let cands = vec![vec![1.0, 2.0], vec![1.5]];
        let binned = BinnedMatrix::new(&d, &cands).unwrap();
        let pairs: Vec<GradPair> = (0..4)
            .map(|i| GradPair {
                grad: i as f64,
                hess: 1.0,
            })
            .collect();
        let all = binned.build(&pairs, &[(0, vec![0, 1, 2, 3])]);
        let h = &all[0];
        assert_eq!(h.total.count, 4);
        assert_eq!(h.total.grad, 6.0);
        assert_eq!(
            h.features[0].bins.iter().map(|b| b.0).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(h.features[0].bins[0].1.count, 2);
        assert_eq!(h.features[1].missing.count, 1);
        assert!(h.is_consistent(0.0));

        let a = binned.build(&pairs, &[(0, vec![0, 2])]);
        let b = binned.build(&pairs, &[(0, vec![1, 3])]);
        let mut merged = GradHessHistogram { nodes: a };
        merged.merge(&GradHessHistogram { nodes: b }).unwrap();
        assert_eq!(merged.nodes[0], *h);
    }

    #[test]
    fn merge_rejects_mismatched_nodes() {
        let mut a = GradHessHistogram {
            nodes: vec![NodeHistogram::empty(1, 2)],
        };
        let b = GradHessHistogram {
            nodes: vec![NodeHistogram::empty(2, 2)],
        };
        assert!(a.merge(&b).is_err());
    }
}
