use serde::{Deserialize, Serialize};

use crate::dataset::Task;

/// Lower bound applied to every Hessian.
pub const HESSIAN_FLOOR: f64 = 1e-16;

/// Margins are clamped to this range when derived from class frequencies.
const BASE_MARGIN_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradPair {
    pub grad: f64,
    pub hess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    BinaryLogistic,
    MulticlassSoftmax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossFunction {
    pub kind: LossKind,
    num_outputs: usize,
    pub hessian_floor: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl LossFunction {
    pub fn for_task(task: Task) -> Self {
        let kind = match task {
            Task::Binary => LossKind::BinaryLogistic,
            Task::Multiclass(_) => LossKind::MulticlassSoftmax,
        };
        Self {
            kind,
            num_outputs: task.num_outputs(),
            hessian_floor: HESSIAN_FLOOR,
        }
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    /// First and second derivatives of the loss with respect to each margin.
    ///
    /// Logistic: `g = p - y`, `h = p(1 - p)`. Softmax: `g_k = p_k - [y = k]`,
    /// `h_k = p_k(1 - p_k)`, the diagonal of the softmax Hessian.
    pub fn grad_hess(&self, margins: &[f64], label: u32, out: &mut [GradPair]) {
        debug_assert_eq!(margins.len(), self.num_outputs);
        match self.kind {
            LossKind::BinaryLogistic => {
                let p = sigmoid(margins[0]);
                out[0] = GradPair {
                    grad: p - f64::from(label),
                    hess: (p * (1.0 - p)).max(self.hessian_floor),
                };
            }
            LossKind::MulticlassSoftmax => {
                let max = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = margins.iter().map(|m| (m - max).exp()).sum();
                for (k, (pair, &m)) in out.iter_mut().zip(margins).enumerate() {
                    let p = (m - max).exp() / total;
                    let y = if k == label as usize { 1.0 } else { 0.0 };
                    *pair = GradPair {
                        grad: p - y,
                        hess: (p * (1.0 - p)).max(self.hessian_floor),
                    };
                }
            }
        }
    }

    /// Negative log-likelihood of `label` under `margins`.
    pub fn loss(&self, margins: &[f64], label: u32) -> f64 {
        match self.kind {
            LossKind::BinaryLogistic => softplus(margins[0]) - f64::from(label) * margins[0],
            LossKind::MulticlassSoftmax => {
                let max = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + margins.iter().map(|m| (m - max).exp()).sum::<f64>().ln();
                lse - margins[label as usize]
            }
        }
    }

    /// Starting margins for a model whose label means are `prevalence`.
    /// Binary: log-odds of the positive rate. Multiclass: log class frequency.
    pub fn base_margins(&self, prevalence: &[f64]) -> Vec<f64> {
        let clamp = |x: f64| x.clamp(-BASE_MARGIN_LIMIT, BASE_MARGIN_LIMIT);
        match self.kind {
            LossKind::BinaryLogistic => {
                let p = prevalence[0];
                vec![clamp((p / (1.0 - p)).ln())]
            }
            LossKind::MulticlassSoftmax => prevalence.iter().map(|&f| clamp(f.ln())).collect(),
        }
    }
}
