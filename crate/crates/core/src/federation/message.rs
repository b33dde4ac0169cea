use serde::{Deserialize, Serialize};

use crate::boosting::{GradHessHistogram, Tree, TreeModel};
use crate::error::{Error, Result};
use crate::sketch::FeatureSketchSet;

pub const PROTOCOL_VERSION: u32 = 1;

/// Messages exchanged between the aggregator and parties. Only aggregates
/// (label sums, sketches, histograms) and models ever appear here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FederationMessage {
    /// First frame a party sends on a fresh connection.
    Register,
    QueryTargetSum,
    /// Per-output label sums (one entry for binary, one per class otherwise)
    /// and the row count.
    ReplyTargetSum {
        label_sums: Vec<f64>,
        count: u64,
    },
    QuerySketch {
        relative_error: f64,
    },
    ReplySketch {
        sketches: FeatureSketchSet,
    },
    BroadcastCandidates {
        candidates: Vec<Vec<f64>>,
    },
    Ack,
    /// Partial tree of the current class; `open_nodes` are leaf placeholders
    /// whose histograms are wanted.
    QueryGradHist {
        tree: Tree,
        open_nodes: Vec<usize>,
    },
    ReplyGradHist {
        histogram: GradHessHistogram,
    },
    BroadcastModel {
        model: TreeModel,
    },
    /// Digest of the adopted model and the local loss under it.
    AckModel {
        digest: String,
        loss_sum: f64,
        count: u64,
    },
    Terminate {
        model: TreeModel,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl FederationMessage {
    pub fn name(&self) -> &'static str {
        match self {
            FederationMessage::Register => "register",
            FederationMessage::QueryTargetSum => "query_target_sum",
            FederationMessage::ReplyTargetSum { .. } => "reply_target_sum",
            FederationMessage::QuerySketch { .. } => "query_sketch",
            FederationMessage::ReplySketch { .. } => "reply_sketch",
            FederationMessage::BroadcastCandidates { .. } => "broadcast_candidates",
            FederationMessage::Ack => "ack",
            FederationMessage::QueryGradHist { .. } => "query_grad_hist",
            FederationMessage::ReplyGradHist { .. } => "reply_grad_hist",
            FederationMessage::BroadcastModel { .. } => "broadcast_model",
            FederationMessage::AckModel { .. } => "ack_model",
            FederationMessage::Terminate { .. } => "terminate",
            FederationMessage::Error { .. } => "error",
        }
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        FederationMessage::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }
}

/// A message with its routing header. `party_id` is the sender for replies
/// and the recipient for queries; replies echo the query's `round` and `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub protocol_version: u32,
    pub round: u32,
    pub step: u64,
    pub party_id: u32,
    pub message: FederationMessage,
}

impl Envelope {
    pub fn new(round: u32, step: u64, party_id: u32, message: FederationMessage) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            round,
            step,
            party_id,
            message,
        }
    }

    /// Reply from `party_id` to this envelope.
    pub fn reply(&self, party_id: u32, message: FederationMessage) -> Self {
        Self::new(self.round, self.step, party_id, message)
    }

    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("envelopes serialize")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let envelope: Envelope = serde_json::from_slice(bytes)?;
        if envelope.protocol_version != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!(
                "protocol version {} (expected {PROTOCOL_VERSION})",
                envelope.protocol_version
            )));
        }
        Ok(envelope)
    }
}
