use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{CsvSchema, Scheme};
use crate::error::{Error, Result};

/// Row filters applied after loading, in field order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    /// Keep the first row for each value of this (encoded) column, then drop it.
    pub unique_by: Option<String>,
    /// Keep only rows of the `n` most frequent labels.
    pub top_labels: Option<usize>,
    /// Seeded uniform subsample to at most this many rows.
    pub subsample: Option<usize>,
}

/// How to turn one raw dataset file into train/holdout matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub name: String,
    /// Human-readable name used in reports.
    pub title: String,
    pub source_url: String,
    /// File name expected in the raw data directory.
    pub raw_file: String,
    #[serde(default)]
    pub sha256: Option<String>,
    pub schema: CsvSchema,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default)]
    pub preprocess: Preprocess,
    /// Row count after preprocessing.
    #[serde(default)]
    pub expected_rows: Option<usize>,
    #[serde(default)]
    pub expected_train_rows: Option<usize>,
    #[serde(default)]
    pub expected_classes: Option<usize>,
    /// Schemes that cannot be run for this dataset.
    #[serde(default)]
    pub infeasible_schemes: Vec<Scheme>,
    #[serde(default)]
    pub notes: String,
}

fn default_holdout() -> f64 {
    0.2
}

const BUILTIN: &[(&str, &str)] = &[
    ("bank", include_str!("../../../../recipes/bank.json")),
    ("bitcoin", include_str!("../../../../recipes/bitcoin.json")),
    (
        "creditcard",
        include_str!("../../../../recipes/creditcard.json"),
    ),
    ("drybean", include_str!("../../../../recipes/drybean.json")),
    (
        "firewall",
        include_str!("../../../../recipes/firewall.json"),
    ),
    ("htru2", include_str!("../../../../recipes/htru2.json")),
    (
        "parkinson",
        include_str!("../../../../recipes/parkinson.json"),
    ),
];

impl Recipe {
    pub fn from_json(text: &str) -> Result<Self> {
        let recipe: Recipe =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("recipe: {e}")))?;
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Names of the recipes bundled with the crate.
    pub fn builtin_names() -> Vec<&'static str> {
        BUILTIN.iter().map(|(name, _)| *name).collect()
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text) = BUILTIN
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::Config(format!(
                    "no recipe named {name:?} (known: {})",
                    Self::builtin_names().join(", ")
                ))
            })?;
        Self::from_json(text)
    }

    /// A bundled recipe by name, or a recipe file if `name_or_path` exists on disk.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if Path::new(name_or_path).is_file() {
            Self::from_path(name_or_path)
        } else {
            Self::builtin(name_or_path)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout fraction {} must be in (0, 1)",
                self.holdout_fraction
            )));
        }
        if self.name.is_empty() || self.raw_file.is_empty() {
            return Err(Error::Config("recipe needs a name and a raw file".into()));
        }
        Ok(())
    }

    pub fn is_feasible(&self, scheme: Scheme) -> bool {
        !self.infeasible_schemes.contains(&scheme)
    }

    pub fn feasible_schemes(&self, schemes: &[Scheme]) -> Vec<Scheme> {
        schemes
            .iter()
            .copied()
            .filter(|&s| self.is_feasible(s))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::holdout_train_size;

    #[test]
    fn builtins_parse() {
        for name in Recipe::builtin_names() {
            let r = Recipe::builtin(name).unwrap();
            assert_eq!(r.name, name);
        }
    }

    #[test]
    fn builtin_row_counts_give_expected_training_sizes() {
        for (name, train) in [
            ("bank", 36168),
            ("creditcard", 227845),
            ("drybean", 10888),
            ("htru2", 14318),
            ("firewall", 52425),
            ("parkinson", 604),
        ] {
            let r = Recipe::builtin(name).unwrap();
            let rows = r.expected_rows.unwrap();
            assert_eq!(
                holdout_train_size(rows, r.holdout_fraction),
                train,
                "{name}"
            );
            assert_eq!(r.expected_train_rows, Some(train), "{name}");
        }
    }

    #[test]
    fn firewall_d_is_infeasible() {
        let r = Recipe::builtin("firewall").unwrap();
        assert!(!r.is_feasible(Scheme::D));
        assert_eq!(r.feasible_schemes(&Scheme::ALL).len(), 4);
    }

    #[test]
    fn unknown_recipe_lists_known_names() {
        let err = Recipe::builtin("nope").unwrap_err().to_string();
        assert!(err.contains("htru2"));
    }
}
