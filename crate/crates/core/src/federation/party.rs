use super::message::{Envelope, FederationMessage};
use super::transport::PartyLink;
use crate::boosting::{GradHessHistogram, LocalLearner, TreeModel};
use crate::dataset::DatasetMatrix;
use crate::error::{Error, Result};

/// A data holder answering aggregator queries from its local rows.
pub struct Party {
    id: u32,
    learner: LocalLearner,
    gradient_round: Option<u32>,
}

impl Party {
    pub fn new(id: u32, data: DatasetMatrix) -> Self {
        Self {
            id,
            learner: LocalLearner::new(data),
            gradient_round: None,
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    /// The last model adopted from a broadcast.
    pub fn model(&self) -> Option<&TreeModel> {
        self.learner.model()
    }

    pub fn learner(&self) -> &LocalLearner {
        &self.learner
    }

    /// Reply to one aggregator message; `None` for messages that take none.
    pub fn handle(&mut self, envelope: &Envelope) -> Result<Option<FederationMessage>> {
        let reply = match &envelope.message {
            FederationMessage::QueryTargetSum => {
                let (label_sums, count) = self.learner.label_sums();
                FederationMessage::ReplyTargetSum { label_sums, count }
            }
            FederationMessage::QuerySketch { relative_error } => FederationMessage::ReplySketch {
                sketches: self.learner.sketch(*relative_error)?,
            },
            FederationMessage::BroadcastCandidates { candidates } => {
                self.learner.set_candidates(candidates)?;
                FederationMessage::Ack
            }
            FederationMessage::QueryGradHist { tree, open_nodes } => {
                if self.gradient_round != Some(envelope.round) {
                    self.learner.begin_round();
                    self.gradient_round = Some(envelope.round);
                }
                let nodes = self.learner.node_histograms(tree, open_nodes)?;
                FederationMessage::ReplyGradHist {
                    histogram: GradHessHistogram { nodes },
                }
            }
            FederationMessage::BroadcastModel { model } => {
                self.learner.sync_model(model)?;
                let (loss_sum, count) = self.learner.loss_sum();
                FederationMessage::AckModel {
                    digest: model.digest(),
                    loss_sum,
                    count,
                }
            }
            FederationMessage::Terminate { model } => {
                self.learner.sync_model(model)?;
                return Ok(None);
            }
            FederationMessage::Error { code, detail } => {
                return Err(Error::Protocol(format!(
                    "aggregator aborted ({code}): {detail}"
                )))
            }
            other => {
                return Err(Error::Protocol(format!(
                    "party cannot handle {}",
                    other.name()
                )))
            }
        };
        Ok(Some(reply))
    }

    /// Message loop: answers queries until `Terminate`, and returns the final
    /// model. Local failures are reported to the aggregator as `Error` replies.
    pub fn run<L: PartyLink + ?Sized>(mut self, link: &mut L) -> Result<TreeModel> {
        loop {
            let envelope = link.recv()?;
            match &envelope.message {
                FederationMessage::Error { .. } | FederationMessage::Terminate { .. } => {
                    self.handle(&envelope)?;
                    return self
                        .learner
                        .model()
                        .cloned()
                        .ok_or_else(|| Error::Protocol("terminated without a model".into()));
                }
                _ => {}
            }
            let reply = self.handle(&envelope).unwrap_or_else(|e| {
                log::warn!("party {}: {e}", self.id);
                Some(FederationMessage::error(error_code(&e), e.to_string()))
            });
            if let Some(reply) = reply {
                link.send(&envelope.reply(self.id, reply))?;
            }
        }
    }
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Shape { .. } | Error::Schema(_) => "schema",
        Error::Protocol(_) => "protocol",
        Error::IncompatibleSketch { .. } | Error::InvalidValue(_) | Error::OutOfRange { .. } => {
            "sketch"
        }
        _ => "internal",
    }
}
