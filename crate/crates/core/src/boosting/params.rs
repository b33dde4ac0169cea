use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::DEFAULT_RELATIVE_ERROR;

/// Boosting knobs. Defaults: lambda 0.1, eta 0.1, 255 bins, 100 rounds,
/// sketch relative error 0.01, gamma 0, depth 6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Penalty per split.
    pub gamma: f64,
    /// Learning rate.
    pub eta: f64,
    /// Maximum number of node levels; 1 means a single leaf.
    pub max_depth: usize,
    /// Maximum split candidates per feature.
    pub max_bins: usize,
    pub rounds: usize,
    /// Minimum rows on each side of a split.
    pub min_child_count: u64,
    /// Relative error of the feature sketches.
    pub relative_error: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            gamma: 0.0,
            eta: 0.1,
            max_depth: 6,
            max_bins: 255,
            rounds: 100,
            min_child_count: 1,
            relative_error: DEFAULT_RELATIVE_ERROR,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name: &'static str, value: f64, expected: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(Error::OutOfRange {
                    name,
                    value,
                    expected,
                })
            }
        };
        check(self.lambda >= 0.0, "lambda", self.lambda, "lambda >= 0")?;
        check(self.gamma >= 0.0, "gamma", self.gamma, "gamma >= 0")?;
        check(
            self.eta > 0.0 && self.eta <= 1.0,
            "eta",
            self.eta,
            "0 < eta <= 1",
        )?;
        check(
            self.max_depth >= 1,
            "max_depth",
            self.max_depth as f64,
            "max_depth >= 1",
        )?;
        check(
            self.max_bins >= 1,
            "max_bins",
            self.max_bins as f64,
            "max_bins >= 1",
        )?;
        check(
            self.max_bins < usize::from(u16::MAX),
            "max_bins",
            self.max_bins as f64,
            "max_bins < 65535",
        )?;
        check(
            self.min_child_count >= 1,
            "min_child_count",
            self.min_child_count as f64,
            "min_child_count >= 1",
        )?;
        check(
            self.relative_error > 0.0 && self.relative_error < 1.0,
            "relative_error",
            self.relative_error,
            "0 < relative_error < 1",
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let p = Hyperparameters::default();
        p.validate().unwrap();
        assert_eq!(
            (p.lambda, p.eta, p.max_bins, p.rounds),
            (0.1, 0.1, 255, 100)
        );
        assert_eq!(p.relative_error, 0.01);
    }

    #[test]
    fn rejects_bad_values() {
        for p in [
            Hyperparameters {
                eta: 0.0,
                ..Default::default()
            },
            Hyperparameters {
                lambda: -1.0,
                ..Default::default()
            },
            Hyperparameters {
                max_depth: 0,
                ..Default::default()
            },
            Hyperparameters {
                gamma: -0.1,
                ..Default::default()
            },
        ] {
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let p: Hyperparameters = serde_json::from_str(r#"{"rounds": 7}"#).unwrap();
        assert_eq!(p.rounds, 7);
        assert_eq!(p.max_bins, 255);
    }
}
