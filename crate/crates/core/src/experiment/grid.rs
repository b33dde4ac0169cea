use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prepare::PreparedData;
use super::recipe::Recipe;
use super::report;
use super::seed::partition_seed;
use crate::boosting::{train_centralized, Hyperparameters, RoundLog, TrainingOutcome, TreeModel};
use crate::dataset::{make_partition, DatasetMatrix, PartitionResult, PartitionSpec, Scheme};
use crate::error::{Error, Result};
use crate::federation::{run_in_process, run_tcp_local, TransportKind};
use crate::metrics::{evaluate, ConfusionMatrix, F1Average};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One model on the whole training set.
    Centralized,
    /// One model per party, trained on that party's rows alone.
    Local,
    /// The five-party protocol, one model per scheme.
    Federated,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Centralized, Mode::Local, Mode::Federated];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Local => "local",
            Mode::Federated => "federated",
        }
    }
}

/// One run of the centralized/local/federated grid for a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub schemes: Vec<Scheme>,
    pub modes: Vec<Mode>,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub transport: TransportKind,
    pub f1_average: F1Average,
    pub timeout_secs: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            schemes: Scheme::ALL.to_vec(),
            modes: Mode::ALL.to_vec(),
            hyperparameters: Hyperparameters::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            transport: TransportKind::InProcess,
            f1_average: F1Average::Macro,
            timeout_secs: 60.0,
        }
    }
}

impl ExperimentConfig {
    pub fn new(dataset: &str) -> Self {
        Self {
            dataset: dataset.to_string(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparameters
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config(format!(
                "timeout {} must be positive",
                self.timeout_secs
            )));
        }
        if self.schemes.is_empty() || self.modes.is_empty() {
            return Err(Error::Config("no schemes or modes selected".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

/// Outcome of one grid cell. `model` is kept in memory only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: String,
    pub mode: Mode,
    pub scheme: Option<Scheme>,
    pub party: Option<u32>,
    pub train_rows: usize,
    pub config_hash: String,
    pub f1: Option<f64>,
    pub confusion: Option<ConfusionMatrix>,
    pub model_digest: Option<String>,
    pub loss_log: Vec<RoundLog>,
    pub error: Option<String>,
    #[serde(skip)]
    pub model: Option<TreeModel>,
}

impl CellResult {
    /// Output directory of this cell below the dataset directory.
    pub fn relative_dir(&self) -> PathBuf {
        let scheme = self.scheme.map_or("full", Scheme::as_str);
        let mut dir = PathBuf::from(scheme).join(self.mode.as_str());
        if let Some(p) = self.party {
            dir = dir.join(format!("party{p}"));
        }
        dir
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeScore {
    pub scheme: Scheme,
    pub f1: Option<f64>,
}

/// Results-table row for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: String,
    pub title: String,
    pub f1_average: F1Average,
    pub centralized: Option<f64>,
    /// Mean F1 over every local model of every scheme.
    pub local_party_avg: Option<f64>,
    pub local_party_models: usize,
    pub federated: Vec<SchemeScore>,
    pub infeasible: Vec<Scheme>,
    pub failed_cells: usize,
}

impl Summary {
    pub fn federated_f1(&self, scheme: Scheme) -> Option<f64> {
        self.federated
            .iter()
            .find(|s| s.scheme == scheme)
            .and_then(|s| s.f1)
    }

    /// Largest pairwise difference between federated F1 scores.
    pub fn federated_spread(&self) -> Option<f64> {
        let scores: Vec<f64> = self.federated.iter().filter_map(|s| s.f1).collect();
        if scores.is_empty() {
            return None;
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(max - min)
    }

    pub fn federated_min(&self) -> Option<f64> {
        self.federated.iter().filter_map(|s| s.f1).reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub cells: Vec<CellResult>,
}

impl GridReport {
    pub fn failed(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error.is_some())
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    dataset: &'a str,
    mode: Mode,
    scheme: Option<Scheme>,
    party: Option<u32>,
    hyperparameters: &'a Hyperparameters,
    master_seed: u64,
    holdout_seed: u64,
    partition_seed: Option<u64>,
    f1_average: F1Average,
    train_rows: usize,
    test_rows: usize,
    raw_sha256: &'a str,
}

/// Feasible `(scheme, partition)` pairs and the infeasible schemes.
pub type SchemePartitions = (Vec<(Scheme, PartitionResult)>, Vec<Scheme>);

/// Partition of the training rows for each feasible scheme. Schemes the
/// recipe marks infeasible, or whose counts fail the feasibility rule, are
/// returned separately.
pub fn scheme_partitions(
    recipe: &Recipe,
    train: &DatasetMatrix,
    schemes: &[Scheme],
    master_seed: u64,
) -> Result<SchemePartitions> {
    let mut feasible = Vec::new();
    let mut infeasible = Vec::new();
    for &scheme in schemes {
        if !recipe.is_feasible(scheme) {
            infeasible.push(scheme);
            continue;
        }
        let spec = PartitionSpec::new(scheme, partition_seed(master_seed, scheme));
        match make_partition(train, &spec) {
            Ok(p) => feasible.push((scheme, p)),
            Err(Error::InfeasiblePartition(reason)) => {
                log::warn!("{}: {reason}", recipe.name);
                infeasible.push(scheme);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((feasible, infeasible))
}

/// Runs every requested cell. Training failures are recorded in their cell
/// and the grid continues.
pub fn run_grid(
    config: &ExperimentConfig,
    recipe: &Recipe,
    data: &PreparedData,
) -> Result<GridReport> {
    config.validate()?;
    let params = &config.hyperparameters;
    let master = data.manifest.master_seed;
    if config.seed != master {
        return Err(Error::Config(format!(
            "config seed {} differs from the seed {master} the data was prepared with",
            config.seed
        )));
    }
    let (partitions, infeasible) = scheme_partitions(recipe, &data.train, &config.schemes, master)?;

    let cell = |mode: Mode,
                scheme: Option<Scheme>,
                party: Option<u32>,
                rows: usize,
                outcome: std::result::Result<TrainingOutcome, String>| {
        let hash_input = HashInput {
            dataset: &recipe.name,
            mode,
            scheme,
            party,
            hyperparameters: params,
            master_seed: master,
            holdout_seed: data.manifest.holdout_seed,
            partition_seed: scheme.map(|s| partition_seed(master, s)),
            f1_average: config.f1_average,
            train_rows: rows,
            test_rows: data.test.num_rows(),
            raw_sha256: &data.manifest.raw_sha256,
        };
        let hash = hex::encode(Sha256::digest(
            serde_json::to_vec(&hash_input).expect("hash input serializes"),
        ));
        let mut result = CellResult {
            dataset: recipe.name.clone(),
            mode,
            scheme,
            party,
            train_rows: rows,
            config_hash: hash,
            f1: None,
            confusion: None,
            model_digest: None,
            loss_log: Vec::new(),
            error: None,
            model: None,
        };
        match outcome.and_then(|o| {
            evaluate(&o.model, &data.test, config.f1_average)
                .map(|e| (o, e))
                .map_err(|e| e.to_string())
        }) {
            Ok((o, eval)) => {
                result.f1 = Some(eval.f1);
                result.confusion = Some(eval.confusion);
                result.model_digest = Some(o.model.digest());
                result.loss_log = o.log;
                result.model = Some(o.model);
            }
            Err(e) => {
                log::error!("{} {:?} {:?} {:?}: {e}", recipe.name, mode, scheme, party);
                result.error = Some(e);
            }
        }
        result
    };

    let mut cells = Vec::new();
    if config.modes.contains(&Mode::Centralized) {
        let started = Instant::now();
        let out = train_centralized(&data.train, params).map_err(|e| e.to_string());
        log::info!(
            "{}: centralized done in {:.1}s",
            recipe.name,
            started.elapsed().as_secs_f64()
        );
        cells.push(cell(
            Mode::Centralized,
            None,
            None,
            data.train.num_rows(),
            out,
        ));
    }
    if config.modes.contains(&Mode::Local) {
        for (scheme, partition) in &partitions {
            for (i, rows) in partition.parties.iter().enumerate() {
                let subset = data.train.subset(rows);
                let out = train_centralized(&subset, params).map_err(|e| e.to_string());
                cells.push(cell(
                    Mode::Local,
                    Some(*scheme),
                    Some(i as u32 + 1),
                    rows.len(),
                    out,
                ));
            }
        }
    }
    if config.modes.contains(&Mode::Federated) {
        for (scheme, partition) in &partitions {
            let started = Instant::now();
            let parties: Vec<(u32, DatasetMatrix)> = partition
                .parties
                .iter()
                .enumerate()
                .map(|(i, rows)| (i as u32 + 1, data.train.subset(rows)))
                .collect();
            let out = match config.transport {
                TransportKind::InProcess => run_in_process(parties, params, config.timeout()),
                TransportKind::Tcp => run_tcp_local(parties, params, config.timeout()),
            }
            .map_err(|e| e.to_string());
            log::info!(
                "{}: federated {scheme} done in {:.1}s",
                recipe.name,
                started.elapsed().as_secs_f64()
            );
            cells.push(cell(
                Mode::Federated,
                Some(*scheme),
                None,
                partition.total(),
                out,
            ));
        }
    }

    let summary = summarize(recipe, config, &partitions, infeasible, &cells);
    Ok(GridReport {
        config: config.clone(),
        summary,
        cells,
    })
}

fn summarize(
    recipe: &Recipe,
    config: &ExperimentConfig,
    partitions: &[(Scheme, PartitionResult)],
    infeasible: Vec<Scheme>,
    cells: &[CellResult],
) -> Summary {
    let centralized = cells
        .iter()
        .find(|c| c.mode == Mode::Centralized)
        .and_then(|c| c.f1);
    let local: Vec<f64> = cells
        .iter()
        .filter(|c| c.mode == Mode::Local)
        .filter_map(|c| c.f1)
        .collect();
    let federated = if config.modes.contains(&Mode::Federated) {
        partitions
            .iter()
            .map(|(scheme, _)| SchemeScore {
                scheme: *scheme,
                f1: cells
                    .iter()
                    .find(|c| c.mode == Mode::Federated && c.scheme == Some(*scheme))
                    .and_then(|c| c.f1),
            })
            .collect()
    } else {
        Vec::new()
    };
    Summary {
        dataset: recipe.name.clone(),
        title: recipe.title.clone(),
        f1_average: config.f1_average,
        centralized,
        local_party_avg: if local.is_empty() {
            None
        } else {
            Some(local.iter().sum::<f64>() / local.len() as f64)
        },
        local_party_models: local.len(),
        federated,
        infeasible,
        failed_cells: cells.iter().filter(|c| c.error.is_some()).count(),
    }
}

/// Writes `{dataset}/{scheme}/{mode}/[party{p}/]model.json` and
/// `metrics.json` for every cell, the dataset's `summary.json` and
/// `summary.md`, and refreshes the combined `summary.md` under `out_dir`.
pub fn write_grid(report: &GridReport, out_dir: &Path) -> Result<()> {
    let dataset_dir = out_dir.join(&report.summary.dataset);
    for cell in &report.cells {
        let dir = dataset_dir.join(cell.relative_dir());
        fs::create_dir_all(&dir)?;
        if let Some(model) = &cell.model {
            fs::write(dir.join("model.json"), model.to_json())?;
        }
        fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(cell)?,
        )?;
    }
    fs::create_dir_all(&dataset_dir)?;
    fs::write(
        dataset_dir.join("summary.json"),
        serde_json::to_string_pretty(&report.summary)?,
    )?;
    fs::write(
        dataset_dir.join("results.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    fs::write(
        dataset_dir.join("summary.md"),
        report::render_dataset(report),
    )?;
    report::write_report(out_dir)?;
    Ok(())
}
