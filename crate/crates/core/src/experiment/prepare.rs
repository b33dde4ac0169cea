use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::recipe::Recipe;
use super::seed::{holdout_seed, subsample_seed};
use crate::dataset::{holdout_split, load_csv, write_csv, CsvSchema, DatasetMatrix, Task};
use crate::error::{Error, Result};

/// Record of a prepared dataset, written next to its train/test files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedManifest {
    pub dataset: String,
    pub task: Task,
    pub feature_names: Vec<String>,
    pub rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub holdout_fraction: f64,
    pub master_seed: u64,
    pub holdout_seed: u64,
    pub train_label_counts: Vec<u64>,
    pub test_label_counts: Vec<u64>,
    pub raw_sha256: String,
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub manifest: PreparedManifest,
    pub train: DatasetMatrix,
    pub test: DatasetMatrix,
}

pub fn raw_path(recipe: &Recipe, raw_dir: &Path) -> PathBuf {
    raw_dir.join(&recipe.raw_file)
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = fs::File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Loads the raw file of `recipe`, applies its row filters, and checks the
/// recipe's shape expectations. Returns the matrix and the file's SHA-256.
pub fn load_raw(
    recipe: &Recipe,
    raw_dir: &Path,
    master_seed: u64,
) -> Result<(DatasetMatrix, String)> {
    let path = raw_path(recipe, raw_dir);
    if !path.is_file() {
        return Err(Error::Load {
            path,
            message: format!(
                "raw file for `{}` is missing; download it from {}",
                recipe.name, recipe.source_url
            ),
        });
    }
    let digest = sha256_file(&path)?;
    if let Some(expected) = &recipe.sha256 {
        if !expected.eq_ignore_ascii_case(&digest) {
            return Err(Error::Load {
                path,
                message: format!("checksum {digest} does not match the recipe's {expected}"),
            });
        }
    }
    let mut data = load_csv(&path, &recipe.schema)?;
    if let Some(column) = &recipe.preprocess.unique_by {
        data = unique_by(&data, column)?;
    }
    if let Some(k) = recipe.preprocess.top_labels {
        data = top_labels(&data, k)?;
    }
    let shape_err = |message: String| Error::Load {
        path: raw_path(recipe, raw_dir),
        message,
    };
    if let Some(expected) = recipe.expected_rows {
        if data.num_rows() != expected {
            return Err(shape_err(format!(
                "{} rows after preprocessing, recipe expects {expected}",
                data.num_rows()
            )));
        }
    }
    if let Some(expected) = recipe.expected_classes {
        if data.task().num_classes() != expected {
            return Err(shape_err(format!(
                "{} classes, recipe expects {expected}",
                data.task().num_classes()
            )));
        }
    }
    if let Some(limit) = recipe.preprocess.subsample {
        data = subsample(&data, limit, subsample_seed(master_seed));
    }
    Ok((data, digest))
}

/// Keeps the first row for each value of `column` and drops the column.
fn unique_by(data: &DatasetMatrix, column: &str) -> Result<DatasetMatrix> {
    let j = data
        .feature_names()
        .iter()
        .position(|n| n == column)
        .ok_or_else(|| Error::Schema(format!("unique_by column `{column}` not found")))?;
    let mut seen = HashSet::new();
    let keep: Vec<usize> = (0..data.num_rows())
        .filter(|&i| seen.insert(data.value(i, j).to_bits()))
        .collect();
    let others: Vec<usize> = (0..data.num_features()).filter(|&c| c != j).collect();
    data.subset(&keep).select_features(&others)
}

/// Rows of the `k` most frequent labels (ties to the lower id), re-encoded
/// in ascending original id.
fn top_labels(data: &DatasetMatrix, k: usize) -> Result<DatasetMatrix> {
    let hist = data.label_histogram();
    let mut order: Vec<usize> = (0..hist.len()).collect();
    order.sort_by(|&a, &b| hist[b].cmp(&hist[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order.into_iter().take(k).collect();
    kept.sort_unstable();
    let code: BTreeMap<u32, u32> = kept
        .iter()
        .enumerate()
        .map(|(new, &old)| (old as u32, new as u32))
        .collect();
    let rows: Vec<usize> = (0..data.num_rows())
        .filter(|&i| code.contains_key(&data.labels()[i]))
        .collect();
    let subset = data.subset(&rows);
    let labels = subset.labels().iter().map(|y| code[y]).collect();
    subset.relabel(labels, Task::from_class_count(kept.len()))
}

fn subsample(data: &DatasetMatrix, limit: usize, seed: u64) -> DatasetMatrix {
    if data.num_rows() <= limit {
        return data.clone();
    }
    let mut order: Vec<usize> = (0..data.num_rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(limit);
    order.sort_unstable();
    data.subset(&order)
}

/// Splits a loaded matrix into train and holdout and records the result.
pub fn split_prepared(
    recipe: &Recipe,
    data: &DatasetMatrix,
    master_seed: u64,
    raw_sha256: String,
) -> Result<PreparedData> {
    let seed = holdout_seed(master_seed);
    let (train, test) = holdout_split(data, recipe.holdout_fraction, seed)?;
    if recipe.preprocess.subsample.is_none() {
        if let Some(expected) = recipe.expected_train_rows {
            if train.num_rows() != expected {
                return Err(Error::Load {
                    path: PathBuf::from(&recipe.raw_file),
                    message: format!(
                        "{} training rows, recipe expects {expected}",
                        train.num_rows()
                    ),
                });
            }
        }
    }
    let manifest = PreparedManifest {
        dataset: recipe.name.clone(),
        task: data.task(),
        feature_names: data.feature_names().to_vec(),
        rows: data.num_rows(),
        train_rows: train.num_rows(),
        test_rows: test.num_rows(),
        holdout_fraction: recipe.holdout_fraction,
        master_seed,
        holdout_seed: seed,
        train_label_counts: train.label_histogram(),
        test_label_counts: test.label_histogram(),
        raw_sha256,
    };
    Ok(PreparedData {
        manifest,
        train,
        test,
    })
}

/// Loads, filters, checks, and splits the raw file of `recipe`.
pub fn prepare(recipe: &Recipe, raw_dir: &Path, master_seed: u64) -> Result<PreparedData> {
    let (data, digest) = load_raw(recipe, raw_dir, master_seed)?;
    split_prepared(recipe, &data, master_seed, digest)
}

pub fn write_prepared(prepared: &PreparedData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(dir.join("train.csv"), &prepared.train)?;
    write_csv(dir.join("test.csv"), &prepared.test)?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&prepared.manifest)?,
    )?;
    Ok(())
}

pub fn read_prepared(dir: &Path) -> Result<PreparedData> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::Load {
        path: manifest_path.clone(),
        message: format!("{e}; run `prepare` first"),
    })?;
    let manifest: PreparedManifest = serde_json::from_str(&text)?;
    let schema = CsvSchema {
        task: Some(manifest.task),
        ..CsvSchema::with_label("label")
    };
    let train = load_csv(dir.join("train.csv"), &schema)?;
    let test = load_csv(dir.join("test.csv"), &schema)?;
    if train.num_rows() != manifest.train_rows || test.num_rows() != manifest.test_rows {
        return Err(Error::Load {
            path: dir.to_path_buf(),
            message: "prepared files do not match their manifest".into(),
        });
    }
    Ok(PreparedData {
        manifest,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::recipe::Preprocess;

    fn recipe(raw_file: &str) -> Recipe {
        Recipe {
            name: "toy".into(),
            title: "Toy".into(),
            source_url: "https://example.org/toy".into(),
            raw_file: raw_file.into(),
            sha256: None,
            schema: CsvSchema::with_label("y"),
            holdout_fraction: 0.2,
            preprocess: Preprocess::default(),
            expected_rows: None,
            expected_train_rows: None,
            expected_classes: None,
            infeasible_schemes: Vec::new(),
            notes: String::new(),
        }
    }

    fn write_toy(dir: &Path, rows: usize) {
        let mut text = String::from("a,b,y\n");
        for i in 0..rows {
            text.push_str(&format!(
                "{},{},{}\n",
                i,
                (i * 7) % 11,
                if i % 3 == 0 { "yes" } else { "no" }
            ));
        }
        fs::write(dir.join("toy.csv"), text).unwrap();
    }

    #[test]
    fn missing_file_names_the_source() {
        let dir = tempfile::tempdir().unwrap();
        let err = prepare(&recipe("toy.csv"), dir.path(), 1)
            .unwrap_err()
            .to_string();
        assert!(err.contains("https://example.org/toy"), "{err}");
    }

    #[test]
    fn prepare_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        write_toy(dir.path(), 50);
        let mut r = recipe("toy.csv");
        r.expected_rows = Some(50);
        r.expected_train_rows = Some(40);
        let prepared = prepare(&r, dir.path(), 9).unwrap();
        assert_eq!(
            (prepared.manifest.train_rows, prepared.manifest.test_rows),
            (40, 10)
        );
        let out = dir.path().join("prepared");
        write_prepared(&prepared, &out).unwrap();
        let back = read_prepared(&out).unwrap();
        assert_eq!(back.train, prepared.train);
        assert_eq!(back.test, prepared.test);
        assert_eq!(back.manifest, prepared.manifest);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_toy(dir.path(), 30);
        let mut r = recipe("toy.csv");
        r.expected_rows = Some(31);
        assert!(matches!(
            prepare(&r, dir.path(), 1),
            Err(Error::Load { .. })
        ));
        let mut r = recipe("toy.csv");
        r.sha256 = Some("00".into());
        assert!(matches!(
            prepare(&r, dir.path(), 1),
            Err(Error::Load { .. })
        ));
    }

    #[test]
    fn filters() {
        let rows: Vec<Vec<f64>> = [5.0, 5.0, 6.0, 7.0, 7.0, 8.0]
            .iter()
            .map(|&a| vec![a, a * 10.0])
            .collect();
        let d =
            DatasetMatrix::from_rows(&rows, vec![0, 1, 2, 2, 1, 2], Task::Multiclass(3)).unwrap();
        let u = unique_by(&d, "f0").unwrap();
        assert_eq!(u.num_rows(), 4);
        assert_eq!(u.num_features(), 1);
        assert_eq!(u.labels(), &[0, 2, 2, 2]);

        let t = top_labels(&d, 2).unwrap();
        assert_eq!(t.task(), Task::Binary);
        assert_eq!(t.labels(), &[0, 1, 1, 0, 1]);

        let s = subsample(&d, 3, 4);
        assert_eq!(s.num_rows(), 3);
        assert_eq!(subsample(&d, 3, 4), s);
    }
}
