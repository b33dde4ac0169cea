//! Transport interface and the in-process channel transport.
//!
//! Both transports move encoded envelopes, so the in-process path exercises
//! the same serialization as TCP.

use std::collections::BTreeMap;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::message::Envelope;
use crate::error::{Error, Result};

/// Aggregator side of a transport.
pub trait AggregatorLink: Send {
    /// Registered party ids, ascending.
    fn parties(&self) -> Vec<u32>;
    fn send(&mut self, party: u32, envelope: &Envelope) -> Result<()>;
    /// Next envelope from any party, or `None` when `timeout` elapses first.
    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Envelope>>;
}

/// Party side of a transport.
pub trait PartyLink: Send {
    fn send(&mut self, envelope: &Envelope) -> Result<()>;
    fn recv(&mut self) -> Result<Envelope>;
}

impl<L: AggregatorLink + ?Sized> AggregatorLink for Box<L> {
    fn parties(&self) -> Vec<u32> {
        (**self).parties()
    }

    fn send(&mut self, party: u32, envelope: &Envelope) -> Result<()> {
        (**self).send(party, envelope)
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Envelope>> {
        (**self).recv_timeout(timeout)
    }
}

impl<L: PartyLink + ?Sized> PartyLink for Box<L> {
    fn send(&mut self, envelope: &Envelope) -> Result<()> {
        (**self).send(envelope)
    }

    fn recv(&mut self) -> Result<Envelope> {
        (**self).recv()
    }
}

pub struct ChannelAggregatorLink {
    outbound: BTreeMap<u32, Sender<Vec<u8>>>,
    inbound: Receiver<Vec<u8>>,
}

pub struct ChannelPartyLink {
    id: u32,
    outbound: Sender<Vec<u8>>,
    inbound: Receiver<Vec<u8>>,
}

impl ChannelPartyLink {
    pub fn id(&self) -> u32 {
        self.id
    }
}

/// Connected in-process links for the given party ids.
pub fn channel_links(party_ids: &[u32]) -> (ChannelAggregatorLink, Vec<ChannelPartyLink>) {
    let (up_tx, up_rx) = mpsc::channel();
    let mut outbound = BTreeMap::new();
    let mut parties = Vec::with_capacity(party_ids.len());
    for &id in party_ids {
        let (down_tx, down_rx) = mpsc::channel();
        outbound.insert(id, down_tx);
        parties.push(ChannelPartyLink {
            id,
            outbound: up_tx.clone(),
            inbound: down_rx,
        });
    }
    (
        ChannelAggregatorLink {
            outbound,
            inbound: up_rx,
        },
        parties,
    )
}

impl AggregatorLink for ChannelAggregatorLink {
    fn parties(&self) -> Vec<u32> {
        self.outbound.keys().copied().collect()
    }

    fn send(&mut self, party: u32, envelope: &Envelope) -> Result<()> {
        let tx = self
            .outbound
            .get(&party)
            .ok_or_else(|| Error::Transport(format!("unknown party {party}")))?;
        tx.send(envelope.encode())
            .map_err(|_| Error::Transport(format!("party {party} disconnected")))
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Envelope>> {
        match self.inbound.recv_timeout(timeout) {
            Ok(bytes) => Envelope::decode(&bytes).map(Some),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("every party disconnected".into()))
            }
        }
    }
}

impl PartyLink for ChannelPartyLink {
    fn send(&mut self, envelope: &Envelope) -> Result<()> {
        self.outbound
            .send(envelope.encode())
            .map_err(|_| Error::Transport("aggregator disconnected".into()))
    }

    fn recv(&mut self) -> Result<Envelope> {
        let bytes = self
            .inbound
            .recv()
            .map_err(|_| Error::Transport("aggregator disconnected".into()))?;
        Envelope::decode(&bytes)
    }
}

/// Direction of a recorded frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    ToParty(u32),
    FromParty(u32),
}

/// Encoded frames seen by a [`RecordingLink`].
pub type Transcript = Arc<Mutex<Vec<(Flow, Vec<u8>)>>>;

/// Aggregator link that records every frame it sends or receives.
pub struct RecordingLink<L> {
    inner: L,
    transcript: Transcript,
}

impl<L: AggregatorLink> RecordingLink<L> {
    pub fn new(inner: L) -> Self {
        Self {
            inner,
            transcript: Transcript::default(),
        }
    }

    pub fn transcript(&self) -> Transcript {
        Arc::clone(&self.transcript)
    }
}

impl<L: AggregatorLink> AggregatorLink for RecordingLink<L> {
    fn parties(&self) -> Vec<u32> {
        self.inner.parties()
    }

    fn send(&mut self, party: u32, envelope: &Envelope) -> Result<()> {
        self.transcript
            .lock()
            .expect("transcript lock")
            .push((Flow::ToParty(party), envelope.encode()));
        self.inner.send(party, envelope)
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Envelope>> {
        let got = self.inner.recv_timeout(timeout)?;
        if let Some(e) = &got {
            self.transcript
                .lock()
                .expect("transcript lock")
                .push((Flow::FromParty(e.party_id), e.encode()));
        }
        Ok(got)
    }
}
