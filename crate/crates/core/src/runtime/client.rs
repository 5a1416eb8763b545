//! Client and owner side of the network protocol.

use std::io::BufReader;
use std::time::Duration;

use rand::Rng;

use crate::error::{Error, Result};
use crate::protocol::SharedDatabase;
use crate::ring::{Ring, RingElement};
use crate::runtime::frame::{Frame, FrameKind, PROTOCOL_VERSION};
use crate::runtime::server::{connect, decode_result};
use crate::store::{reconstruct_rows, share_query};

/// Shares `q`, sends one share to each server and reconstructs the skyline
/// rows (in fetch order) from the two result shares.
///
/// Both servers are contacted before anything is sent, so an unreachable
/// server fails the query without leaving a half-started session.
pub fn query<R: Rng + ?Sized>(
    servers: [&str; 2],
    ring: Ring,
    vmax: RingElement,
    q: &[u64],
    timeout: Option<Duration>,
    rng: &mut R,
) -> Result<Vec<Vec<u64>>> {
    let shares = share_query(ring, q, vmax, rng)?;
    let mut streams = Vec::with_capacity(2);
    for addr in servers {
        let s = connect(addr)?;
        s.set_read_timeout(timeout)?;
        streams.push(s);
    }
    let session: u32 = rng.gen();
    for (stream, share) in streams.iter_mut().zip(&shares) {
        let mut words = vec![PROTOCOL_VERSION, q.len() as u64];
        words.extend_from_slice(share);
        Frame::words(FrameKind::Query, session, ring, &words).write_to(stream)?;
    }
    let mut results = Vec::with_capacity(2);
    for (stream, addr) in streams.into_iter().zip(servers) {
        let mut reader = BufReader::new(stream);
        let frame = Frame::read_from(&mut reader).map_err(|e| match e {
            Error::ChannelClosed => {
                Error::Network(format!("{addr} closed the connection without a result"))
            }
            Error::Io(io) => Error::Network(format!("{addr}: {io}")),
            other => other,
        })?;
        if frame.kind != FrameKind::Result || frame.session != session {
            return Err(Error::Protocol(format!(
                "{addr} answered with {:?} for session {}",
                frame.kind, frame.session
            )));
        }
        results.push(decode_result(ring, q.len(), &frame.payload)?);
    }
    if results[0].len() != results[1].len() {
        return Err(Error::Protocol(format!(
            "servers disagree on the result size ({} vs {})",
            results[0].len(),
            results[1].len()
        )));
    }
    reconstruct_rows(ring, &results[0], &results[1])
}

/// Replaces a server's database with `db` (which must be that server's
/// share).
pub fn upload_shares(addr: &str, db: &SharedDatabase) -> Result<()> {
    let mut bytes = Vec::new();
    db.write_to(&mut bytes)?;
    let mut stream = connect(addr)?;
    Frame::new(FrameKind::ShareUpload, 0, bytes).write_to(&mut stream)?;
    let ack = Frame::read_from(&mut stream).map_err(|e| match e {
        Error::ChannelClosed => Error::Network(format!("{addr} rejected the upload")),
        other => other,
    })?;
    if ack.kind != FrameKind::Result {
        return Err(Error::Protocol(format!("unexpected {:?} acknowledging upload", ack.kind)));
    }
    Ok(())
}
