use super::histogram::{GradStats, NodeHistogram};
use super::model::Direction;
use super::params::Hyperparameters;

/// Best split found for a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDecision {
    pub feature: usize,
    /// Last bucket on the left side.
    pub bin: usize,
    pub threshold: f64,
    pub gain: f64,
    pub default: Direction,
    pub left: GradStats,
    pub right: GradStats,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom == 0.0 {
        0.0
    } else {
        g * g / denom
    }
}

/// `1/2 [GL^2/(HL+l) + GR^2/(HR+l) - (GL+GR)^2/(HL+HR+l)] - gamma`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, params: &Hyperparameters) -> f64 {
    let lambda = params.lambda;
    0.5 * (score(gl, hl, lambda) + score(gr, hr, lambda) - score(gl + gr, hl + hr, lambda))
        - params.gamma
}

/// `-G / (H + lambda)`, or 0 when the denominator vanishes.
pub fn leaf_weight(grad: f64, hess: f64, params: &Hyperparameters) -> f64 {
    let denom = hess + params.lambda;
    if grad == 0.0 {
        0.0
    } else if denom == 0.0 {
        log::debug!("leaf with zero Hessian mass and lambda = 0; weight set to 0");
        0.0
    } else {
        -grad / denom
    }
}

/// Prefix-scans each feature's buckets and returns the split with the largest
/// positive gain. Ties go to the lowest feature index, then the lowest bucket.
pub fn find_best_split(
    node: &NodeHistogram,
    candidates: &[Vec<f64>],
    params: &Hyperparameters,
) -> Option<SplitDecision> {
    let min_count = params.min_child_count;
    let mut best: Option<SplitDecision> = None;
    for (feature, (hist, thresholds)) in node.features.iter().zip(candidates).enumerate() {
        let mut present = GradStats::default();
        for (_, s) in &hist.bins {
            present.merge(s);
        }
        let missing = hist.missing;
        let mut left = GradStats::default();
        for &(bin, stats) in &hist.bins {
            let bin = usize::from(bin);
            if bin >= thresholds.len() {
                break;
            }
            left.merge(&stats);
            let right = present.minus(&left);
            let default = if left.hess >= right.hess {
                Direction::Left
            } else {
                Direction::Right
            };
            let (mut l, mut r) = (left, right);
            match default {
                Direction::Left => l.merge(&missing),
                Direction::Right => r.merge(&missing),
            }
            if l.count < min_count || r.count < min_count {
                continue;
            }
            let gain = split_gain(l.grad, l.hess, r.grad, r.hess, params);
            if best.map_or(true, |b| gain > b.gain) {
                best = Some(SplitDecision {
                    feature,
                    bin,
                    threshold: thresholds[bin],
                    gain,
                    default,
                    left: l,
                    right: r,
                });
            }
        }
    }
    best.filter(|b| b.gain > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::histogram::FeatureHistogram;

    fn params(lambda: f64, gamma: f64) -> Hyperparameters {
        Hyperparameters {
            lambda,
            gamma,
            ..Hyperparameters::default()
        }
    }

    fn stats(grad: f64, hess: f64, count: u64) -> GradStats {
        GradStats { grad, hess, count }
    }

    #[test]
    fn gain_examples() {
        let p = params(0.0, 0.0);
        assert_eq!(split_gain(1.0, 1.0, 1.0, 1.0, &p), 0.0);
        assert_eq!(split_gain(1.0, 1.0, -1.0, 1.0, &p), 1.0);
        let penalized = params(0.0, 0.5);
        for (gl, hl, gr, hr) in [(1.0, 1.0, -1.0, 1.0), (0.3, 2.0, 4.0, 0.5)] {
            let diff = split_gain(gl, hl, gr, hr, &p) - split_gain(gl, hl, gr, hr, &penalized);
            assert!((diff - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(leaf_weight(2.0, 3.0, &params(1.0, 0.0)), -0.5);
        assert_eq!(leaf_weight(0.0, 7.0, &params(0.1, 0.0)), 0.0);
        assert_eq!(leaf_weight(1.0, 0.0, &params(0.0, 0.0)), 0.0);
    }

    #[test]
    fn weight_minimizes_node_objective() {
        // Grid search over w of G w + (H + lambda) w^2 / 2.
        let p = params(0.1, 0.0);
        for (g, h) in [(2.5, 4.0), (-1.25, 0.7), (0.3, 12.0)] {
            let objective = |w: f64| g * w + 0.5 * (h + p.lambda) * w * w;
            let grid_best = (-200_000..=200_000)
                .map(|i| f64::from(i) * 1e-5)
                .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
                .unwrap();
            assert!((leaf_weight(g, h, &p) - grid_best).abs() <= 1e-5);
        }
    }

    #[test]
    fn single_bucket_cannot_split() {
        let node = NodeHistogram {
            node: 0,
            total: stats(1.0, 2.0, 2),
            features: vec![FeatureHistogram {
                bins: vec![(0, stats(1.0, 2.0, 2))],
                missing: GradStats::default(),
            }],
        };
        assert!(find_best_split(&node, &[vec![]], &params(0.0, 0.0)).is_none());
        // Even with a threshold, one occupied bucket leaves a side empty.
        assert!(find_best_split(&node, &[vec![5.0]], &params(0.0, 0.0)).is_none());
    }

    #[test]
    fn two_bucket_split() {
        let node = NodeHistogram {
            node: 0,
            total: stats(0.0, 2.0, 2),
            features: vec![FeatureHistogram {
                bins: vec![(0, stats(1.0, 1.0, 1)), (1, stats(-1.0, 1.0, 1))],
                missing: GradStats::default(),
            }],
        };
        let d = find_best_split(&node, &[vec![0.5]], &params(0.0, 0.0)).unwrap();
        assert_eq!((d.feature, d.bin, d.threshold, d.gain), (0, 0, 0.5, 1.0));
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        let f = FeatureHistogram {
            bins: vec![(0, stats(1.0, 1.0, 1)), (1, stats(-1.0, 1.0, 1))],
            missing: GradStats::default(),
        };
        let node = NodeHistogram {
            node: 0,
            total: stats(0.0, 2.0, 2),
            features: vec![f.clone(), f],
        };
        let d = find_best_split(&node, &[vec![0.5], vec![0.5]], &params(0.0, 0.0)).unwrap();
        assert_eq!(d.feature, 0);
    }

    #[test]
    fn missing_rows_follow_heavier_side() {
        let node = NodeHistogram {
            node: 0,
            total: stats(0.5, 5.0, 5),
            features: vec![FeatureHistogram {
                bins: vec![(0, stats(2.0, 3.0, 3)), (1, stats(-2.0, 1.0, 1))],
                missing: stats(0.5, 1.0, 1),
            }],
        };
        let d = find_best_split(&node, &[vec![0.0]], &params(0.0, 0.0)).unwrap();
        assert_eq!(d.default, Direction::Left);
        assert_eq!(d.left.count, 4);
        assert_eq!(d.right.count, 1);
    }
}
