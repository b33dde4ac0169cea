//! TCP transport: each frame is a 4-byte big-endian payload length followed by
//! a JSON-encoded [`Envelope`]. A party's first frame must be `Register`.

use std::collections::BTreeMap;
use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use super::message::{Envelope, FederationMessage};
use super::transport::{AggregatorLink, PartyLink};
use crate::error::{Error, Result};

/// Frames larger than this are rejected.
pub const MAX_FRAME_BYTES: usize = 1 << 30;

pub fn write_frame<W: Write>(writer: &mut W, payload: &[u8]) -> Result<()> {
    if payload.len() > MAX_FRAME_BYTES {
        return Err(Error::Transport(format!(
            "frame of {} bytes is too large",
            payload.len()
        )));
    }
    let mut buf = Vec::with_capacity(4 + payload.len());
    buf.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    buf.extend_from_slice(payload);
    writer.write_all(&buf)?;
    writer.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(reader: &mut R) -> Result<Vec<u8>> {
    let mut len = [0u8; 4];
    reader.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(Error::Transport(format!(
            "frame of {len} bytes is too large"
        )));
    }
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload)?;
    Ok(payload)
}

pub struct TcpAggregatorLink {
    writers: BTreeMap<u32, TcpStream>,
    inbound: Receiver<Result<Envelope>>,
    local_addr: SocketAddr,
}

impl TcpAggregatorLink {
    /// Binds `addr` and accepts connections until every id in `expected`
    /// has registered, or `timeout` elapses.
    pub fn listen(addr: impl ToSocketAddrs, expected: &[u32], timeout: Duration) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        Self::accept(listener, expected, timeout)
    }

    pub fn accept(listener: TcpListener, expected: &[u32], timeout: Duration) -> Result<Self> {
        let local_addr = listener.local_addr()?;
        log::info!(
            "aggregator listening on {local_addr}, waiting for {} parties",
            expected.len()
        );
        listener.set_nonblocking(true)?;
        let deadline = Instant::now() + timeout;
        let (tx, rx) = mpsc::channel();
        let mut writers = BTreeMap::new();
        while writers.len() < expected.len() {
            match listener.accept() {
                Ok((stream, peer)) => {
                    stream.set_nonblocking(false)?;
                    match register(stream, expected, &writers, deadline, tx.clone()) {
                        Ok((id, writer)) => {
                            log::info!("party {id} registered from {peer}");
                            writers.insert(id, writer);
                        }
                        Err(e) => log::warn!("rejected connection from {peer}: {e}"),
                    }
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        let missing = expected
                            .iter()
                            .copied()
                            .find(|id| !writers.contains_key(id))
                            .unwrap_or_default();
                        return Err(Error::Timeout {
                            party: missing,
                            seconds: timeout.as_secs_f64(),
                        });
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(Self {
            writers,
            inbound: rx,
            local_addr,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }
}

fn register(
    mut stream: TcpStream,
    expected: &[u32],
    registered: &BTreeMap<u32, TcpStream>,
    deadline: Instant,
    tx: Sender<Result<Envelope>>,
) -> Result<(u32, TcpStream)> {
    let wait = deadline
        .saturating_duration_since(Instant::now())
        .max(Duration::from_millis(1));
    stream.set_read_timeout(Some(wait))?;
    let hello = Envelope::decode(&read_frame(&mut stream)?)?;
    stream.set_read_timeout(None)?;
    let id = hello.party_id;
    if hello.message != FederationMessage::Register {
        return Err(Error::Protocol(format!(
            "expected register, got {}",
            hello.message.name()
        )));
    }
    if !expected.contains(&id) || registered.contains_key(&id) {
        let _ = write_frame(
            &mut stream,
            &hello
                .reply(
                    id,
                    FederationMessage::error("registration", format!("party {id} not accepted")),
                )
                .encode(),
        );
        return Err(Error::Protocol(format!(
            "unexpected or duplicate party {id}"
        )));
    }
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    thread::spawn(move || loop {
        let got = read_frame(&mut reader).and_then(|bytes| Envelope::decode(&bytes));
        let stop = got.is_err();
        let got = got.map_err(|e| Error::Transport(format!("party {id}: {e}")));
        if tx.send(got).is_err() || stop {
            break;
        }
    });
    Ok((id, stream))
}

impl AggregatorLink for TcpAggregatorLink {
    fn parties(&self) -> Vec<u32> {
        self.writers.keys().copied().collect()
    }

    fn send(&mut self, party: u32, envelope: &Envelope) -> Result<()> {
        let stream = self
            .writers
            .get_mut(&party)
            .ok_or_else(|| Error::Transport(format!("unknown party {party}")))?;
        write_frame(stream, &envelope.encode())
            .map_err(|e| Error::Transport(format!("sending to party {party}: {e}")))
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Envelope>> {
        match self.inbound.recv_timeout(timeout) {
            Ok(got) => got.map(Some),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("every party disconnected".into()))
            }
        }
    }
}

pub struct TcpPartyLink {
    id: u32,
    stream: TcpStream,
}

impl TcpPartyLink {
    /// Connects to the aggregator, retrying until `timeout`, and registers.
    pub fn connect(addr: impl ToSocketAddrs, id: u32, timeout: Duration) -> Result<Self> {
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
        let deadline = Instant::now() + timeout;
        let stream = loop {
            let attempt = addrs.iter().find_map(|a| TcpStream::connect(a).ok());
            match attempt {
                Some(s) => break s,
                None if Instant::now() >= deadline => {
                    return Err(Error::Transport(format!(
                        "could not reach aggregator at {addrs:?}"
                    )))
                }
                None => thread::sleep(Duration::from_millis(20)),
            }
        };
        stream.set_nodelay(true)?;
        let mut link = Self { id, stream };
        link.send(&Envelope::new(0, 0, id, FederationMessage::Register))?;
        Ok(link)
    }

    pub fn id(&self) -> u32 {
        self.id
    }
}

impl PartyLink for TcpPartyLink {
    fn send(&mut self, envelope: &Envelope) -> Result<()> {
        write_frame(&mut self.stream, &envelope.encode())
    }

    fn recv(&mut self) -> Result<Envelope> {
        let bytes = read_frame(&mut self.stream)
            .map_err(|e| Error::Transport(format!("reading from aggregator: {e}")))?;
        Envelope::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn frame_layout() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{}").unwrap();
        assert_eq!(buf, [0, 0, 0, 2, b'{', b'}']);
        assert_eq!(read_frame(&mut Cursor::new(buf)).unwrap(), b"{}");
    }

    #[test]
    fn truncated_frame_fails() {
        assert!(read_frame(&mut Cursor::new(vec![0, 0, 0, 9, 1])).is_err());
    }

    #[test]
    fn oversized_length_is_rejected() {
        let mut bytes = vec![0xff; 4];
        bytes.extend_from_slice(b"x");
        assert!(matches!(
            read_frame(&mut Cursor::new(bytes)),
            Err(Error::Transport(_))
        ));
    }

    #[test]
    fn register_and_exchange() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let party = thread::spawn(move || {
            let mut link = TcpPartyLink::connect(addr, 4, Duration::from_secs(5)).unwrap();
            let q = link.recv().unwrap();
            link.send(&q.reply(4, FederationMessage::Ack)).unwrap();
        });
        let mut agg = TcpAggregatorLink::accept(listener, &[4], Duration::from_secs(5)).unwrap();
        assert_eq!(agg.parties(), vec![4]);
        agg.send(
            4,
            &Envelope::new(1, 7, 4, FederationMessage::QueryTargetSum),
        )
        .unwrap();
        let reply = agg.recv_timeout(Duration::from_secs(5)).unwrap().unwrap();
        assert_eq!((reply.round, reply.step, reply.party_id), (1, 7, 4));
        assert_eq!(reply.message, FederationMessage::Ack);
        party.join().unwrap();
    }

    #[test]
    fn missing_party_times_out() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let err = TcpAggregatorLink::accept(listener, &[1, 2], Duration::from_millis(50))
            .err()
            .unwrap();
        assert!(matches!(err, Error::Timeout { party: 1, .. }));
    }
}
