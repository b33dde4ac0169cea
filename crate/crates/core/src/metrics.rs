//! Confusion matrices and F1 scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boosting::{sigmoid, TreeModel};
use crate::dataset::{DatasetMatrix, Task};
use crate::error::{Error, Result};

/// Entry `(i, j)` counts rows of true class `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Builds a matrix from row-major counts.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Shape {
                expected: classes * classes,
                actual: counts.len(),
            });
        }
        Ok(Self { classes, counts })
    }

    pub fn from_predictions(classes: usize, truth: &[u32], predicted: &[u32]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t as usize, p as usize)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::UndefinedMetric(format!(
                "class ({truth}, {predicted}) outside a {0}x{0} matrix",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.get(class, class)
    }

    pub fn false_positives(&self, class: usize) -> u64 {
        (0..self.classes)
            .filter(|&i| i != class)
            .map(|i| self.get(i, class))
            .sum()
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        (0..self.classes)
            .filter(|&j| j != class)
            .map(|j| self.get(class, j))
            .sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|j| self.get(class, j)).sum()
    }

    /// F1 of one class; 0 when it has no true or predicted rows.
    pub fn class_f1(&self, class: usize) -> f64 {
        f1_from_counts(
            self.true_positives(class),
            self.false_positives(class),
            self.false_negatives(class),
        )
    }
}

fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// How per-class F1 scores are combined for multiclass tasks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    #[default]
    Macro,
    Micro,
    Weighted,
}

impl F1Average {
    pub fn as_str(self) -> &'static str {
        match self {
            F1Average::Macro => "macro",
            F1Average::Micro => "micro",
            F1Average::Weighted => "weighted",
        }
    }
}

impl fmt::Display for F1Average {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for F1Average {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "macro" => Ok(F1Average::Macro),
            "micro" => Ok(F1Average::Micro),
            "weighted" => Ok(F1Average::Weighted),
            _ => Err(Error::Config(format!("unknown F1 average {s:?}"))),
        }
    }
}

/// Positive-class F1 for binary tasks, macro-averaged F1 otherwise.
pub fn f1_score(cm: &ConfusionMatrix, task: Task) -> Result<f64> {
    f1_score_with(cm, task, F1Average::Macro)
}

/// [`f1_score`] with an explicit multiclass averaging rule. Binary tasks
/// always score the positive class.
pub fn f1_score_with(cm: &ConfusionMatrix, task: Task, average: F1Average) -> Result<f64> {
    if cm.classes() != task.num_classes() {
        return Err(Error::Shape {
            expected: task.num_classes(),
            actual: cm.classes(),
        });
    }
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("empty confusion matrix".into()));
    }
    let k = cm.classes();
    let score = match (task, average) {
        (Task::Binary, _) => cm.class_f1(1),
        (Task::Multiclass(_), F1Average::Macro) => {
            (0..k).map(|c| cm.class_f1(c)).sum::<f64>() / k as f64
        }
        (Task::Multiclass(_), F1Average::Micro) => {
            let tp: u64 = (0..k).map(|c| cm.true_positives(c)).sum();
            let fp: u64 = (0..k).map(|c| cm.false_positives(c)).sum();
            let fn_: u64 = (0..k).map(|c| cm.false_negatives(c)).sum();
            f1_from_counts(tp, fp, fn_)
        }
        (Task::Multiclass(_), F1Average::Weighted) => {
            (0..k)
                .map(|c| cm.class_f1(c) * cm.support(c) as f64)
                .sum::<f64>()
                / total as f64
        }
    };
    Ok(score)
}

/// Binary: class 1 iff `sigmoid(margin) >= 0.5`. Multiclass: argmax of the
/// margins, ties to the lowest class id.
pub fn predict_class(model: &TreeModel, row: &[f64]) -> Result<u32> {
    let margins = model.predict_margin(row)?;
    Ok(class_from_margins(model.task, &margins))
}

pub fn class_from_margins(task: Task, margins: &[f64]) -> u32 {
    match task {
        Task::Binary => u32::from(sigmoid(margins[0]) >= 0.5),
        Task::Multiclass(_) => {
            let mut best = 0;
            for (c, &m) in margins.iter().enumerate() {
                if m > margins[best] {
                    best = c;
                }
            }
            best as u32
        }
    }
}

pub fn confusion_matrix(model: &TreeModel, data: &DatasetMatrix) -> Result<ConfusionMatrix> {
    if model.task != data.task() {
        return Err(Error::Schema(format!(
            "model task {:?} does not match data task {:?}",
            model.task,
            data.task()
        )));
    }
    let mut cm = ConfusionMatrix::new(data.task().num_classes());
    for (row, &label) in data.rows().zip(data.labels()) {
        cm.record(label as usize, predict_class(model, row)? as usize)?;
    }
    Ok(cm)
}

/// Holdout evaluation of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub f1: f64,
    pub average: F1Average,
    pub rows: u64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(model: &TreeModel, data: &DatasetMatrix, average: F1Average) -> Result<Evaluation> {
    let confusion = confusion_matrix(model, data)?;
    Ok(Evaluation {
        f1: f1_score_with(&confusion, data.task(), average)?,
        average,
        rows: confusion.total(),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::Direction;
    use crate::boosting::{Tree, TreeNode};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binary(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(2, vec![tn, fp, fn_, tp]).unwrap()
    }

    #[test]
    fn binary_examples() {
        assert_eq!(f1_score(&binary(1, 0, 0, 0), Task::Binary).unwrap(), 1.0);
        assert_eq!(f1_score(&binary(0, 5, 5, 0), Task::Binary).unwrap(), 0.0);
        assert_eq!(f1_score(&binary(0, 0, 0, 9), Task::Binary).unwrap(), 0.0);
    }

    #[test]
    fn empty_matrix_is_undefined() {
        assert!(matches!(
            f1_score(&ConfusionMatrix::new(2), Task::Binary),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn macro_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let counts: Vec<u64> = (0..9).map(|_| rng.gen_range(0..40)).collect();
            let cm = ConfusionMatrix::from_counts(3, counts.clone()).unwrap();
            if cm.total() == 0 {
                continue;
            }
            let at = |i: usize, j: usize| counts[i * 3 + j] as f64;
            let mut sum = 0.0;
            for c in 0..3 {
                let tp = at(c, c);
                let predicted: f64 = (0..3).map(|i| at(i, c)).sum();
                let actual: f64 = (0..3).map(|j| at(c, j)).sum();
                let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
                let recall = if actual > 0.0 { tp / actual } else { 0.0 };
                sum += if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
            }
            let got = f1_score(&cm, Task::Multiclass(3)).unwrap();
            assert!((got - sum / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn micro_equals_accuracy_for_single_label() {
        let cm = ConfusionMatrix::from_counts(3, vec![5, 1, 0, 2, 7, 1, 0, 3, 9]).unwrap();
        let micro = f1_score_with(&cm, Task::Multiclass(3), F1Average::Micro).unwrap();
        assert!((micro - 21.0 / 28.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_width_is_shape_error() {
        assert!(matches!(
            f1_score(&ConfusionMatrix::new(3), Task::Binary),
            Err(Error::Shape { .. })
        ));
    }

    fn null(task: Task, base_margin: Vec<f64>) -> TreeModel {
        let mut m = TreeModel::null(task, 1, vec![0.5; task.num_outputs()], 0.1);
        m.base_margin = base_margin;
        m
    }

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(
            predict_class(&null(Task::Binary, vec![0.0]), &[1.0]).unwrap(),
            1
        );
        assert_eq!(
            predict_class(&null(Task::Binary, vec![-1e-9]), &[1.0]).unwrap(),
            0
        );
    }

    #[test]
    fn multiclass_ties_go_low() {
        let m = null(Task::Multiclass(3), vec![1.0, 1.0, 0.0]);
        assert_eq!(predict_class(&m, &[0.0]).unwrap(), 0);
        let m = null(Task::Multiclass(3), vec![0.0, 2.0, 2.0]);
        assert_eq!(predict_class(&m, &[0.0]).unwrap(), 1);
    }

    #[test]
    fn row_width_is_checked() {
        let m = null(Task::Binary, vec![0.0]);
        assert!(matches!(
            predict_class(&m, &[1.0, 2.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn classes_match_margin_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for task in [Task::Binary, Task::Multiclass(4)] {
            let mut model = TreeModel::null(task, 2, vec![0.25; task.num_outputs()], 0.3);
            for t in 0..12 {
                model.trees.push(Tree {
                    class: t % task.num_outputs(),
                    nodes: vec![
                        TreeNode::Split {
                            feature: t % 2,
                            threshold: rng.gen_range(-1.0..1.0),
                            default: Direction::Left,
                            left: 1,
                            right: 2,
                        },
                        TreeNode::Leaf {
                            weight: rng.gen_range(-2.0..2.0),
                        },
                        TreeNode::Leaf {
                            weight: rng.gen_range(-2.0..2.0),
                        },
                    ],
                });
            }
            for _ in 0..200 {
                let row = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
                let margins = model.predict_margin(&row).unwrap();
                let expected = match task {
                    Task::Binary => u32::from(1.0 / (1.0 + (-margins[0]).exp()) >= 0.5),
                    Task::Multiclass(_) => {
                        let max = margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        margins.iter().position(|&m| m == max).unwrap() as u32
                    }
                };
                assert_eq!(predict_class(&model, &row).unwrap(), expected);
            }
        }
    }

    proptest! {
        #[test]
        fn f1_in_unit_interval(counts in proptest::collection::vec(0u64..50, 9), avg in 0usize..3) {
            let cm = ConfusionMatrix::from_counts(3, counts).unwrap();
            prop_assume!(cm.total() > 0);
            let average = [F1Average::Macro, F1Average::Micro, F1Average::Weighted][avg];
            let f = f1_score_with(&cm, Task::Multiclass(3), average).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn macro_is_permutation_invariant(counts in proptest::collection::vec(0u64..50, 16), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
            let cm = ConfusionMatrix::from_counts(4, counts.clone()).unwrap();
            prop_assume!(cm.total() > 0);
            let mut permuted = vec![0; 16];
            for i in 0..4 {
                for j in 0..4 {
                    permuted[perm[i] * 4 + perm[j]] = counts[i * 4 + j];
                }
            }
            let pm = ConfusionMatrix::from_counts(4, permuted).unwrap();
            let a = f1_score(&cm, Task::Multiclass(4)).unwrap();
            let b = f1_score(&pm, Task::Multiclass(4)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
