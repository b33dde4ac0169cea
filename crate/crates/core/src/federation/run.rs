#![allow(clippy::result_large_err)]

use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::aggregator::Aggregator;
use super::party::Party;
use super::tcp::{TcpAggregatorLink, TcpPartyLink};
use super::transport::{channel_links, AggregatorLink};
use crate::boosting::{Hyperparameters, TrainingOutcome, TreeModel};
use crate::dataset::{load_csv, CsvSchema, DatasetMatrix, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    InProcess,
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyConfig {
    pub id: u32,
    /// Prepared CSV with numeric features and a trailing `label` column.
    pub data_path: PathBuf,
}

/// A federated training job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default = "default_addr")]
    pub aggregator_addr: String,
    pub task: Task,
    pub parties: Vec<PartyConfig>,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    /// Recorded with the job; training itself draws no random numbers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_addr() -> String {
    "127.0.0.1:7878".to_string()
}

fn default_timeout() -> f64 {
    60.0
}

impl FederationConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parties.is_empty() {
            return Err(Error::Config("no parties configured".into()));
        }
        let mut ids: Vec<u32> = self.parties.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("party ids must be unique".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config(format!(
                "timeout {} must be positive",
                self.timeout_secs
            )));
        }
        self.hyperparameters
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn party_ids(&self) -> Vec<u32> {
        self.parties.iter().map(|p| p.id).collect()
    }

    pub fn party(&self, id: u32) -> Result<&PartyConfig> {
        self.parties
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::Config(format!("party {id} is not in the config")))
    }
}

/// Loads a prepared party file, keeping label ids as written.
pub fn load_party_data(path: impl AsRef<Path>, task: Task) -> Result<DatasetMatrix> {
    let schema = CsvSchema {
        task: Some(task),
        ..CsvSchema::with_label("label")
    };
    load_csv(path, &schema)
}

/// A failed job and the last model every party acknowledged.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    #[source]
    pub error: Error,
    pub last_good: Option<TreeModel>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            last_good: None,
        }
    }
}

/// Drives `aggregator` to completion, converting failures into [`RunFailure`].
pub fn drive<L: AggregatorLink>(
    aggregator: &mut Aggregator<L>,
) -> Result<TrainingOutcome, RunFailure> {
    aggregator.run().map_err(|error| RunFailure {
        error,
        last_good: aggregator.last_good_model().cloned(),
    })
}

/// Runs every party on its own thread over in-process channels.
pub fn run_in_process(
    parties: Vec<(u32, DatasetMatrix)>,
    params: &Hyperparameters,
    timeout: Duration,
) -> Result<TrainingOutcome, RunFailure> {
    let ids: Vec<u32> = parties.iter().map(|(id, _)| *id).collect();
    let (link, party_links) = channel_links(&ids);
    let mut aggregator = Aggregator::new(link, params.clone()).with_timeout(timeout);
    thread::scope(|scope| {
        for ((id, data), mut link) in parties.into_iter().zip(party_links) {
            scope.spawn(move || {
                if let Err(e) = Party::new(id, data).run(&mut link) {
                    log::warn!("party {id} stopped: {e}");
                }
            });
        }
        let result = drive(&mut aggregator);
        drop(aggregator);
        result
    })
}

/// Runs a job from its config. With the TCP transport this binds
/// `aggregator_addr` and waits for the configured parties to connect.
pub fn run_training(config: &FederationConfig) -> Result<TrainingOutcome, RunFailure> {
    config.validate()?;
    let params = &config.hyperparameters;
    match config.transport {
        TransportKind::InProcess => {
            let parties = config
                .parties
                .iter()
                .map(|p| Ok((p.id, load_party_data(&p.data_path, config.task)?)))
                .collect::<Result<Vec<_>>>()?;
            run_in_process(parties, params, config.timeout())
        }
        TransportKind::Tcp => {
            let link = TcpAggregatorLink::listen(
                config.aggregator_addr.as_str(),
                &config.party_ids(),
                config.timeout(),
            )?;
            let mut aggregator =
                Aggregator::new(link, params.clone()).with_timeout(config.timeout());
            drive(&mut aggregator)
        }
    }
}

/// Connects party `id` of `config` to its aggregator and serves until the job ends.
pub fn run_party(config: &FederationConfig, id: u32) -> Result<TreeModel> {
    let party = config.party(id)?;
    let data = load_party_data(&party.data_path, config.task)?;
    let mut link = TcpPartyLink::connect(config.aggregator_addr.as_str(), id, config.timeout())?;
    Party::new(id, data).run(&mut link)
}

/// Runs every party on its own thread over TCP on an ephemeral localhost port.
pub fn run_tcp_local(
    parties: Vec<(u32, DatasetMatrix)>,
    params: &Hyperparameters,
    timeout: Duration,
) -> Result<TrainingOutcome, RunFailure> {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").map_err(Error::from)?;
    let addr = listener.local_addr().map_err(Error::from)?;
    let ids: Vec<u32> = parties.iter().map(|(id, _)| *id).collect();
    thread::scope(|scope| {
        for (id, data) in parties {
            scope.spawn(move || {
                let served = TcpPartyLink::connect(addr, id, timeout)
                    .and_then(|mut link| Party::new(id, data).run(&mut link));
                if let Err(e) = served {
                    log::warn!("party {id} stopped: {e}");
                }
            });
        }
        let link = TcpAggregatorLink::accept(listener, &ids, timeout)?;
        let mut aggregator = Aggregator::new(link, params.clone()).with_timeout(timeout);
        let result = drive(&mut aggregator);
        drop(aggregator);
        result
    })
}
