//! Tabular datasets, holdout splitting, and sample-count skew partitioning.

mod loader;
mod partition;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::loader::{load_csv, write_csv, CsvSchema};
pub use self::partition::{
    even_counts, make_partition, partition_even, reallocate_once, reallocated_counts,
    round_half_even, scheme_counts, PartitionManifest, PartitionResult, PartitionSpec, Scheme,
    PARTY_COUNT, REALLOCATION_FRACTIONS,
};

/// Classification task of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Binary,
    Multiclass(usize),
}

impl Task {
    /// Task implied by the number of distinct labels.
    pub fn from_class_count(k: usize) -> Task {
        if k <= 2 {
            Task::Binary
        } else {
            Task::Multiclass(k)
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::Multiclass(k) => k,
        }
    }

    /// Number of margins the model produces per row.
    pub fn num_outputs(self) -> usize {
        match self {
            Task::Binary => 1,
            Task::Multiclass(k) => k,
        }
    }
}

/// Dense row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMatrix {
    features: Vec<f64>,
    num_features: usize,
    labels: Vec<u32>,
    feature_names: Vec<String>,
    task: Task,
}

impl DatasetMatrix {
    pub fn new(
        features: Vec<f64>,
        num_features: usize,
        labels: Vec<u32>,
        feature_names: Vec<String>,
        task: Task,
    ) -> Result<Self> {
        let rows = labels.len();
        if features.len() != rows * num_features {
            return Err(Error::Shape {
                expected: rows * num_features,
                actual: features.len(),
            });
        }
        if feature_names.len() != num_features {
            return Err(Error::Schema(format!(
                "{} feature names for {num_features} features",
                feature_names.len()
            )));
        }
        let k = task.num_classes();
        if let Some(bad) = labels.iter().find(|&&y| y as usize >= k) {
            return Err(Error::Schema(format!("label {bad} outside [0, {k})")));
        }
        Ok(Self {
            features,
            num_features,
            labels,
            feature_names,
            task,
        })
    }

    /// Builds a matrix from rows with generated feature names `f0, f1, ...`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u32>, task: Task) -> Result<Self> {
        let num_features = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * num_features);
        for row in rows {
            if row.len() != num_features {
                return Err(Error::Shape {
                    expected: num_features,
                    actual: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        let names = (0..num_features).map(|j| format!("f{j}")).collect();
        Self::new(features, num_features, labels, names, task)
    }

    pub fn num_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.num_rows()).map(move |i| self.row(i))
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.num_features + feature]
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> DatasetMatrix {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        DatasetMatrix {
            features,
            num_features: self.num_features,
            labels,
            feature_names: self.feature_names.clone(),
            task: self.task,
        }
    }

    /// Keeps only the feature columns at `keep`, in that order.
    pub fn select_features(&self, keep: &[usize]) -> Result<DatasetMatrix> {
        if let Some(&bad) = keep.iter().find(|&&j| j >= self.num_features) {
            return Err(Error::Shape {
                expected: self.num_features,
                actual: bad + 1,
            });
        }
        let features = self
            .rows()
            .flat_map(|row| keep.iter().map(move |&j| row[j]))
            .collect();
        let names = keep
            .iter()
            .map(|&j| self.feature_names[j].clone())
            .collect();
        DatasetMatrix::new(features, keep.len(), self.labels.clone(), names, self.task)
    }

    /// Same rows with new labels.
    pub fn relabel(&self, labels: Vec<u32>, task: Task) -> Result<DatasetMatrix> {
        if labels.len() != self.num_rows() {
            return Err(Error::Shape {
                expected: self.num_rows(),
                actual: labels.len(),
            });
        }
        DatasetMatrix::new(
            self.features.clone(),
            self.num_features,
            labels,
            self.feature_names.clone(),
            task,
        )
    }

    /// Count of rows per class id.
    pub fn label_histogram(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.task.num_classes()];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }

    /// Number of distinct class ids present.
    pub fn distinct_labels(&self) -> usize {
        self.label_histogram().iter().filter(|&&c| c > 0).count()
    }

    /// Drops rows whose features and label repeat an earlier row.
    pub fn dedup_rows(&self) -> DatasetMatrix {
        let mut seen = HashSet::new();
        let mut keep = Vec::new();
        for i in 0..self.num_rows() {
            let key: Vec<u64> = self
                .row(i)
                .iter()
                .map(|v| v.to_bits())
                .chain(std::iter::once(u64::from(self.labels[i])))
                .collect();
            if seen.insert(key) {
                keep.push(i);
            }
        }
        self.subset(&keep)
    }
}

/// Number of training rows kept by a holdout of `fraction`: `floor((1 - fraction) * n)`.
pub fn holdout_train_size(n: usize, fraction: f64) -> usize {
    // The epsilon absorbs representation error in products like 0.8 * 10.
    ((1.0 - fraction) * n as f64 + 1e-9).floor() as usize
}

/// Seeded uniform split into `(train, test)`; both keep the original row order.
pub fn holdout_split(
    data: &DatasetMatrix,
    fraction: f64,
    seed: u64,
) -> Result<(DatasetMatrix, DatasetMatrix)> {
    let (train, test) = holdout_indices(data.num_rows(), fraction, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

pub fn holdout_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::OutOfRange {
            name: "holdout fraction",
            value: fraction,
            expected: "0 < fraction < 1",
        });
    }
    let train_size = holdout_train_size(n, fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order.split_off(train_size);
    let mut train = order;
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> DatasetMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * 2) as f64]).collect();
        let labels = (0..n).map(|i| (i % 2) as u32).collect();
        DatasetMatrix::from_rows(&rows, labels, Task::Binary).unwrap()
    }

    #[test]
    fn holdout_sizes() {
        assert_eq!(holdout_train_size(45211, 0.2), 36168);
        assert_eq!(holdout_train_size(17898, 0.2), 14318);
        assert_eq!(holdout_train_size(13611, 0.2), 10888);
        assert_eq!(holdout_train_size(756, 0.2), 604);
        let (train, test) = holdout_split(&toy(10), 0.2, 7).unwrap();
        assert_eq!((train.num_rows(), test.num_rows()), (8, 2));
    }

    #[test]
    fn holdout_is_deterministic_and_disjoint() {
        let a = holdout_indices(1000, 0.2, 42).unwrap();
        let b = holdout_indices(1000, 0.2, 42).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.0.iter().chain(&a.1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_ne!(a, holdout_indices(1000, 0.2, 43).unwrap());
    }

    #[test]
    fn holdout_rejects_bad_fraction() {
        assert!(holdout_split(&toy(10), 0.0, 1).is_err());
        assert!(holdout_split(&toy(10), 1.0, 1).is_err());
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let err = DatasetMatrix::from_rows(&[vec![1.0]], vec![2], Task::Binary);
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn dedup_keeps_first() {
        let rows = vec![vec![1.0], vec![1.0], vec![2.0], vec![1.0]];
        let d = DatasetMatrix::from_rows(&rows, vec![0, 0, 0, 1], Task::Binary).unwrap();
        let u = d.dedup_rows();
        assert_eq!(u.num_rows(), 3);
        assert_eq!(u.labels(), &[0, 0, 1]);
    }

    #[test]
    fn select_and_relabel() {
        let d = toy(4);
        let s = d.select_features(&[1]).unwrap();
        assert_eq!(s.row(3), &[6.0]);
        assert_eq!(s.feature_names(), &["f1".to_string()]);
        assert!(d.select_features(&[2]).is_err());
        let r = d.relabel(vec![2, 1, 0, 2], Task::Multiclass(3)).unwrap();
        assert_eq!(r.label_histogram(), vec![1, 1, 2]);
        assert!(d.relabel(vec![0], Task::Binary).is_err());
    }
}
