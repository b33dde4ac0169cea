//! Aggregator/party protocol.
//!
//! Setup collects label sums and feature sketches, then broadcasts split
//! candidates and the null model. Each boosting round grows one tree per
//! output, one histogram exchange per depth level, and ends with a model
//! broadcast that every party acknowledges with the model's digest.

mod aggregator;
mod message;
mod party;
mod run;
pub mod tcp;
pub mod transport;

pub use aggregator::{Aggregator, DEFAULT_TIMEOUT};
pub use message::{Envelope, FederationMessage, PROTOCOL_VERSION};
pub use party::Party;
pub use run::{
    drive, load_party_data, run_in_process, run_party, run_tcp_local, run_training,
    FederationConfig, PartyConfig, RunFailure, TransportKind,
};
pub use tcp::{TcpAggregatorLink, TcpPartyLink};
pub use transport::{channel_links, AggregatorLink, PartyLink, RecordingLink};
