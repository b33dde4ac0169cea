use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use super::message::{Envelope, FederationMessage};
use super::transport::AggregatorLink;
use crate::boosting::{
    class_prevalence, grow_tree, HistogramSource, Hyperparameters, NodeHistogram, NodeId, RoundLog,
    TrainingOutcome, Tree, TreeModel,
};
use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::sketch::FeatureSketchSet;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Coordinates one federated training job over a fixed set of parties.
///
/// Every query goes to all registered parties and waits for all of them;
/// replies are merged in ascending party id.
pub struct Aggregator<L> {
    link: L,
    params: Hyperparameters,
    timeout: Duration,
    parties: Vec<u32>,
    round: u32,
    step: u64,
    last_good: Option<TreeModel>,
}

impl<L: AggregatorLink> Aggregator<L> {
    pub fn new(link: L, params: Hyperparameters) -> Self {
        let parties = link.parties();
        Self {
            link,
            params,
            timeout: DEFAULT_TIMEOUT,
            parties,
            round: 0,
            step: 0,
            last_good: None,
        }
    }

    /// Per-exchange wait for replies.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn parties(&self) -> &[u32] {
        &self.parties
    }

    /// The most recent model every party acknowledged.
    pub fn last_good_model(&self) -> Option<&TreeModel> {
        self.last_good.as_ref()
    }

    pub fn into_link(self) -> L {
        self.link
    }

    /// Runs the whole job: target sums, sketches, `rounds` boosting rounds,
    /// then `Terminate`. On failure parties are sent an `Error` and the last
    /// acknowledged model stays available through [`Self::last_good_model`].
    pub fn run(&mut self) -> Result<TrainingOutcome> {
        let result = self.run_job();
        match &result {
            Ok(outcome) => self.broadcast(FederationMessage::Terminate {
                model: outcome.model.clone(),
            }),
            Err(e) => self.broadcast(FederationMessage::error("aborted", e.to_string())),
        }
        result
    }

    fn run_job(&mut self) -> Result<TrainingOutcome> {
        self.params.validate()?;
        if self.parties.is_empty() {
            return Err(Error::EmptyFederation);
        }
        let params = self.params.clone();
        let (task, prevalence) = self.collect_target_sums()?;
        let (num_features, candidates) = self.build_surrogate()?;
        let mut model = TreeModel::null(task, num_features, prevalence, params.eta);
        self.broadcast_candidates(&candidates)?;
        self.publish(&model)?;

        let mut log = Vec::with_capacity(params.rounds);
        for round in 1..=params.rounds {
            let started = Instant::now();
            self.round = round as u32;
            let mut next = model.clone();
            for class in 0..task.num_outputs() {
                next.trees
                    .push(grow_tree(self, class, &candidates, &params)?);
            }
            let train_loss = self.publish(&next)?;
            model = next;
            log::info!(
                "round {round}: train loss {train_loss:.6} ({:.3}s)",
                started.elapsed().as_secs_f64()
            );
            log.push(RoundLog { round, train_loss });
        }
        Ok(TrainingOutcome {
            model,
            candidates,
            log,
        })
    }

    /// Task and federation-wide label means from every party's label sums.
    pub fn collect_target_sums(&mut self) -> Result<(Task, Vec<f64>)> {
        let mut sums = Vec::with_capacity(self.parties.len());
        for (party, reply) in self.exchange(FederationMessage::QueryTargetSum)? {
            match reply {
                FederationMessage::ReplyTargetSum { label_sums, count } => {
                    sums.push((label_sums, count))
                }
                other => return Err(unexpected(party, "reply_target_sum", &other)),
            }
        }
        let prevalence = class_prevalence(&sums)?;
        let task = match prevalence.len() {
            1 => Task::Binary,
            k => Task::Multiclass(k),
        };
        Ok((task, prevalence))
    }

    /// Merges every party's sketches and extracts the split candidates.
    pub fn build_surrogate(&mut self) -> Result<(usize, Vec<Vec<f64>>)> {
        let relative_error = self.params.relative_error;
        let replies = self.exchange(FederationMessage::QuerySketch { relative_error })?;
        let mut merged: Option<FeatureSketchSet> = None;
        for (party, reply) in replies {
            let sketches = match reply {
                FederationMessage::ReplySketch { sketches } => sketches,
                other => return Err(unexpected(party, "reply_sketch", &other)),
            };
            if let Some(delta) = sketches.relative_error() {
                if delta != relative_error {
                    return Err(Error::Protocol(format!(
                        "party {party} sketched with relative error {delta}, requested {relative_error}"
                    )));
                }
            }
            let set = merged.get_or_insert(FeatureSketchSet::empty(
                sketches.num_features(),
                relative_error,
            )?);
            set.merge(&sketches).map_err(|e| match e {
                Error::Schema(detail) => Error::Schema(format!("party {party}: {detail}")),
                e => e,
            })?;
        }
        let merged = merged.ok_or(Error::EmptyFederation)?;
        if merged.num_features() == 0 {
            return Err(Error::Schema("parties report no features".into()));
        }
        Ok((
            merged.num_features(),
            merged.split_candidates(self.params.max_bins),
        ))
    }

    fn broadcast_candidates(&mut self, candidates: &[Vec<f64>]) -> Result<()> {
        let message = FederationMessage::BroadcastCandidates {
            candidates: candidates.to_vec(),
        };
        for (party, reply) in self.exchange(message)? {
            if reply != FederationMessage::Ack {
                return Err(unexpected(party, "ack", &reply));
            }
        }
        Ok(())
    }

    /// Broadcasts `model`, checks every party adopted it, and returns the
    /// mean training loss under it.
    fn publish(&mut self, model: &TreeModel) -> Result<f64> {
        let digest = model.digest();
        let mut loss = 0.0;
        let mut rows = 0u64;
        let message = FederationMessage::BroadcastModel {
            model: model.clone(),
        };
        for (party, reply) in self.exchange(message)? {
            match reply {
                FederationMessage::AckModel {
                    digest: theirs,
                    loss_sum,
                    count,
                } => {
                    if theirs != digest {
                        return Err(Error::Protocol(format!(
                            "party {party} adopted model {theirs}, expected {digest}"
                        )));
                    }
                    loss += loss_sum;
                    rows += count;
                }
                other => return Err(unexpected(party, "ack_model", &other)),
            }
        }
        if rows == 0 {
            return Err(Error::EmptyFederation);
        }
        self.last_good = Some(model.clone());
        Ok(loss / rows as f64)
    }

    /// Sends `message` to every party and waits for all replies. Replies to
    /// other exchanges are discarded.
    fn exchange(&mut self, message: FederationMessage) -> Result<Vec<(u32, FederationMessage)>> {
        self.step += 1;
        let (round, step) = (self.round, self.step);
        for &party in &self.parties {
            self.link
                .send(party, &Envelope::new(round, step, party, message.clone()))?;
        }
        let deadline = Instant::now() + self.timeout;
        let mut replies = BTreeMap::new();
        while replies.len() < self.parties.len() {
            let now = Instant::now();
            if now >= deadline {
                let missing = self
                    .parties
                    .iter()
                    .copied()
                    .find(|p| !replies.contains_key(p))
                    .expect("some reply is missing");
                return Err(Error::Timeout {
                    party: missing,
                    seconds: self.timeout.as_secs_f64(),
                });
            }
            let Some(envelope) = self.link.recv_timeout(deadline - now)? else {
                continue;
            };
            let party = envelope.party_id;
            if (envelope.round, envelope.step) != (round, step) {
                log::warn!(
                    "discarding stale {} from party {party} (round {}, step {}; expected {round}, {step})",
                    envelope.message.name(),
                    envelope.round,
                    envelope.step
                );
                continue;
            }
            if !self.parties.contains(&party) {
                log::warn!("discarding reply from unregistered party {party}");
                continue;
            }
            if replies.contains_key(&party) {
                log::warn!("discarding duplicate reply from party {party}");
                continue;
            }
            if let FederationMessage::Error { code, detail } = envelope.message {
                return Err(Error::Party {
                    party,
                    code,
                    detail,
                });
            }
            replies.insert(party, envelope.message);
        }
        Ok(replies.into_iter().collect())
    }

    fn broadcast(&mut self, message: FederationMessage) {
        self.step += 1;
        for &party in &self.parties {
            let envelope = Envelope::new(self.round, self.step, party, message.clone());
            if let Err(e) = self.link.send(party, &envelope) {
                log::warn!("could not send {} to party {party}: {e}", message.name());
            }
        }
    }
}

impl<L: AggregatorLink> HistogramSource for Aggregator<L> {
    fn histograms(&mut self, tree: &Tree, open: &[NodeId]) -> Result<Vec<NodeHistogram>> {
        let message = FederationMessage::QueryGradHist {
            tree: tree.clone(),
            open_nodes: open.to_vec(),
        };
        let mut merged: Option<Vec<NodeHistogram>> = None;
        for (party, reply) in self.exchange(message)? {
            let nodes = match reply {
                FederationMessage::ReplyGradHist { histogram } => histogram.nodes,
                other => return Err(unexpected(party, "reply_grad_hist", &other)),
            };
            if nodes.len() != open.len() || nodes.iter().zip(open).any(|(h, &n)| h.node != n) {
                return Err(Error::Protocol(format!(
                    "party {party} answered for the wrong nodes"
                )));
            }
            match &mut merged {
                None => merged = Some(nodes),
                Some(acc) => {
                    for (mine, theirs) in acc.iter_mut().zip(&nodes) {
                        mine.merge(theirs)?;
                    }
                }
            }
        }
        merged.ok_or(Error::EmptyFederation)
    }
}

fn unexpected(party: u32, wanted: &str, got: &FederationMessage) -> Error {
    Error::Protocol(format!(
        "party {party} sent {} where {wanted} was expected",
        got.name()
    ))
}
