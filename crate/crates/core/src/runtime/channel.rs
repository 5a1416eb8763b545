//! Ordered, reliable duplex channels between the two servers.
//!
//! Latency is injected on the sending side of every flight: a flight is
//! stamped with `now + latency` and not handed to the peer before then.

use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::ring::{Ring, RingElement};
use crate::runtime::frame::{Frame, FrameKind};

pub trait Channel: Send {
    fn send(&mut self, kind: FrameKind, words: Vec<RingElement>) -> Result<()>;
    fn recv(&mut self) -> Result<(FrameKind, Vec<RingElement>)>;
}

fn sleep_until(t: Instant) {
    let now = Instant::now();
    if t > now {
        thread::sleep(t - now);
    }
}

struct Flight {
    kind: FrameKind,
    words: Vec<RingElement>,
    deliver_at: Instant,
}

/// In-process channel endpoint.
pub struct LocalChannel {
    tx: Sender<Flight>,
    rx: Receiver<Flight>,
    latency: Duration,
}

impl LocalChannel {
    pub fn pair(latency: Duration) -> (LocalChannel, LocalChannel) {
        let (tx_a, rx_a) = mpsc::channel();
        let (tx_b, rx_b) = mpsc::channel();
        (
            LocalChannel {
                tx: tx_a,
                rx: rx_b,
                latency,
            },
            LocalChannel {
                tx: tx_b,
                rx: rx_a,
                latency,
            },
        )
    }
}

impl Channel for LocalChannel {
    fn send(&mut self, kind: FrameKind, words: Vec<RingElement>) -> Result<()> {
        let flight = Flight {
            kind,
            words,
            deliver_at: Instant::now() + self.latency,
        };
        self.tx.send(flight).map_err(|_| Error::ChannelClosed)
    }

    fn recv(&mut self) -> Result<(FrameKind, Vec<RingElement>)> {
        let flight = self.rx.recv().map_err(|_| Error::ChannelClosed)?;
        sleep_until(flight.deliver_at);
        Ok((flight.kind, flight.words))
    }
}

/// Channel over a TCP connection to the peer server.
///
/// Writes go through a dedicated thread so that both servers can push a
/// large flight at the same time without deadlocking on full socket buffers.
pub struct TcpChannel {
    ring: Ring,
    session: u32,
    latency: Duration,
    reader: BufReader<TcpStream>,
    writer: Option<Sender<(Instant, Frame)>>,
    writer_thread: Option<JoinHandle<()>>,
    shutdown: TcpStream,
}

impl TcpChannel {
    pub fn new(stream: TcpStream, ring: Ring, session: u32, latency: Duration) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::with_capacity(1 << 16, stream.try_clone()?);
        let shutdown = stream.try_clone()?;
        let (tx, rx) = mpsc::channel::<(Instant, Frame)>();
        let writer_thread = thread::Builder::new()
            .name(format!("peer-writer-{session}"))
            .spawn(move || {
                let mut out = BufWriter::with_capacity(1 << 16, stream);
                for (deliver_at, frame) in rx {
                    sleep_until(deliver_at);
                    if let Err(e) = frame.write_to(&mut out) {
                        log::debug!("peer writer stopped: {e}");
                        break;
                    }
                }
            })?;
        Ok(TcpChannel {
            ring,
            session,
            latency,
            reader,
            writer: Some(tx),
            writer_thread: Some(writer_thread),
            shutdown,
        })
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, kind: FrameKind, words: Vec<RingElement>) -> Result<()> {
        let frame = Frame::words(kind, self.session, self.ring, &words);
        self.writer
            .as_ref()
            .ok_or(Error::ChannelClosed)?
            .send((Instant::now() + self.latency, frame))
            .map_err(|_| Error::ChannelClosed)
    }

    fn recv(&mut self) -> Result<(FrameKind, Vec<RingElement>)> {
        let frame = Frame::read_from(&mut self.reader)?;
        if frame.session != self.session {
            return Err(Error::Protocol(format!(
                "frame for session {} on channel of session {}",
                frame.session, self.session
            )));
        }
        match frame.kind {
            FrameKind::RoundData | FrameKind::OpenBit => {}
            other => {
                return Err(Error::Protocol(format!(
                    "unexpected {other:?} frame between servers"
                )))
            }
        }
        Ok((frame.kind, frame.decode_words(self.ring)?))
    }
}

impl Drop for TcpChannel {
    fn drop(&mut self) {
        // Flush queued flights before closing.
        self.writer.take();
        if let Some(t) = self.writer_thread.take() {
            let _ = t.join();
        }
        let _ = self.shutdown.shutdown(Shutdown::Both);
    }
}
