//! Long-lived server role.
//!
//! Each server listens on one port. The first frame of a connection says
//! what it is:
//!
//! * `Query` from a client: `[version, m, q shares..]`.
//! * `RoundData` from the first server to the second (peer hello):
//!   `[version, pool segment, l]`, carrying the client's session id.
//! * `ShareUpload` from the owner: a share file, replacing the database.
//!
//! The first server assigns every query a fresh segment of its randomness
//! pool and tells the second server which one, so both consume matching
//! halves and no correlation is ever used twice. The second server pairs the
//! client connection with the peer connection by session id.

use std::collections::{HashMap, HashSet};
use std::io::{BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::correlated::{budget_for_query, CorrelationKind, CorrelationPool, RandomnessBudget};
use crate::error::{Error, Result};
use crate::gadgets::MultiBaMode;
use crate::protocol::{run_query, SharedDatabase};
use crate::ring::{Ring, RingElement};
use crate::runtime::channel::TcpChannel;
use crate::runtime::frame::{decode_words, encode_words, Frame, FrameKind, PROTOCOL_VERSION};
use crate::runtime::metrics::{meter_report, SessionMetrics};
use crate::runtime::session::Session;
use crate::sharing::PartyId;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub party: PartyId,
    pub listen: String,
    /// Address of the second server; required for the first.
    pub peer: Option<String>,
    pub latency: Duration,
    pub mode: MultiBaMode,
    /// Largest skyline size a single query may produce; sizes the pool
    /// segment reserved per query. Must match on both servers.
    pub k_max: usize,
}

/// How long half of a session (client query or peer hello) waits for the
/// other half before its connection is dropped.
const PENDING_TTL: Duration = Duration::from_secs(30);

enum Pending {
    Client(TcpStream, Vec<RingElement>),
    Peer(TcpStream, usize),
}

struct State {
    cfg: ServerConfig,
    ring: Ring,
    db: RwLock<Arc<SharedDatabase>>,
    pool: CorrelationPool,
    segment: RandomnessBudget,
    next_segment: AtomicUsize,
    used_segments: Mutex<HashSet<usize>>,
    pending: Mutex<HashMap<u32, (Instant, Pending)>>,
    metrics: Mutex<Vec<SessionMetrics>>,
    stop: AtomicBool,
}

pub struct ServerHandle {
    addr: SocketAddr,
    state: Arc<State>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Metrics of every completed session so far.
    pub fn metrics(&self) -> Vec<SessionMetrics> {
        self.state.metrics.lock().unwrap().clone()
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    /// Blocks until the accept loop exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop_and_join(&mut self) {
        self.state.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_and_join();
        }
    }
}

/// Binds and starts serving in a background thread.
pub fn spawn_server(cfg: ServerConfig, db: SharedDatabase, pool: CorrelationPool) -> Result<ServerHandle> {
    if db.party != cfg.party || pool.party() != cfg.party {
        return Err(Error::InvalidArgument(format!(
            "server {} given shares of {} and pool of {}",
            cfg.party,
            db.party,
            pool.party()
        )));
    }
    if db.ring != pool.ring() {
        return Err(Error::WidthMismatch {
            expected: db.ring.bits(),
            found: pool.ring().bits(),
        });
    }
    if cfg.party.is_first() && cfg.peer.is_none() {
        return Err(Error::InvalidArgument("the first server needs a peer address".into()));
    }
    let segment = budget_for_query(db.ring, db.n, db.m, cfg.k_max.max(1), cfg.mode)?;
    let segments = pool.segments(&segment);
    if segments == 0 {
        return Err(Error::InvalidArgument(format!(
            "randomness pool too small for one query with k_max = {}",
            cfg.k_max
        )));
    }
    log::info!(
        "{}: {} x {} database, pool covers {segments} queries",
        cfg.party,
        db.n,
        db.m
    );
    let listener = TcpListener::bind(&cfg.listen)
        .map_err(|e| Error::Network(format!("cannot listen on {}: {e}", cfg.listen)))?;
    let addr = listener.local_addr()?;
    let state = Arc::new(State {
        ring: db.ring,
        db: RwLock::new(Arc::new(db)),
        pool,
        segment,
        next_segment: AtomicUsize::new(0),
        used_segments: Mutex::new(HashSet::new()),
        pending: Mutex::new(HashMap::new()),
        metrics: Mutex::new(Vec::new()),
        stop: AtomicBool::new(false),
        cfg,
    });
    let st = Arc::clone(&state);
    let thread = thread::Builder::new()
        .name(format!("server-{}", st.cfg.party.as_u8()))
        .spawn(move || accept_loop(listener, st))?;
    Ok(ServerHandle {
        addr,
        state,
        thread: Some(thread),
    })
}

/// Serves until the process is terminated.
pub fn run_server(cfg: ServerConfig, db: SharedDatabase, pool: CorrelationPool) -> Result<()> {
    let handle = spawn_server(cfg, db, pool)?;
    log::info!("listening on {}", handle.addr());
    handle.join();
    Ok(())
}

fn accept_loop(listener: TcpListener, state: Arc<State>) {
    for conn in listener.incoming() {
        if state.stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let st = Arc::clone(&state);
        let _ = thread::Builder::new()
            .name("connection".into())
            .spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = handle_connection(stream, &st) {
                    log::warn!("{}: connection from {peer:?} failed: {e}", st.cfg.party);
                }
            });
    }
}

fn handle_connection(mut stream: TcpStream, state: &State) -> Result<()> {
    stream.set_nodelay(true)?;
    let frame = Frame::read_from(&mut stream)?;
    let session = frame.session;
    match frame.kind {
        FrameKind::Query => {
            let words = frame.decode_words(state.ring)?;
            let q = parse_query(&words, state)?;
            if state.cfg.party.is_first() {
                let segment = state.next_segment.fetch_add(1, Ordering::SeqCst);
                if segment as u64 > state.ring.mask() {
                    return Err(Error::RandomnessExhausted {
                        kind: CorrelationKind::ArithTriple,
                        requested: segment,
                        remaining: 0,
                    });
                }
                let peer_addr = state.cfg.peer.as_deref().expect("checked at startup");
                let mut peer = connect(peer_addr)?;
                Frame::words(
                    FrameKind::RoundData,
                    session,
                    state.ring,
                    &[PROTOCOL_VERSION, segment as u64, state.ring.bits() as u64],
                )
                .write_to(&mut peer)?;
                run_session(state, session, stream, peer, q, segment)
            } else {
                rendezvous(state, session, Pending::Client(stream, q))
            }
        }
        FrameKind::RoundData if !state.cfg.party.is_first() => {
            let words = frame.decode_words(state.ring)?;
            if words.len() != 3 {
                return Err(Error::MalformedFrame("peer hello must carry 3 words".into()));
            }
            if words[0] != PROTOCOL_VERSION {
                return Err(Error::VersionMismatch {
                    local: PROTOCOL_VERSION,
                    remote: words[0],
                });
            }
            if words[2] != state.ring.bits() as u64 {
                return Err(Error::WidthMismatch {
                    expected: state.ring.bits(),
                    found: words[2] as u32,
                });
            }
            rendezvous(state, session, Pending::Peer(stream, words[1] as usize))
        }
        FrameKind::ShareUpload => {
            let db = SharedDatabase::read_from(&frame.payload[..])?;
            if db.party != state.cfg.party || db.ring != state.ring {
                return Err(Error::Protocol(format!(
                    "upload of {}-bit shares for {} rejected",
                    db.ring.bits(),
                    db.party
                )));
            }
            let segment = budget_for_query(db.ring, db.n, db.m, state.cfg.k_max.max(1), state.cfg.mode)?;
            if segment != state.segment {
                return Err(Error::Protocol(
                    "uploaded database changes the pool segment size; restart the servers".into(),
                ));
            }
            *state.db.write().unwrap() = Arc::new(db);
            Frame::new(FrameKind::Result, session, 0u32.to_le_bytes().to_vec()).write_to(&mut stream)
        }
        other => Err(Error::MalformedFrame(format!(
            "{other:?} is not a valid opening frame"
        ))),
    }
}

pub(crate) fn connect(addr: &str) -> Result<TcpStream> {
    let addrs: Vec<SocketAddr> = addr
        .to_socket_addrs()
        .map_err(|e| Error::Network(format!("cannot resolve {addr}: {e}")))?
        .collect();
    let mut last = None;
    for a in addrs {
        match TcpStream::connect_timeout(&a, Duration::from_secs(5)) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Network(format!(
        "cannot reach {addr}: {}",
        last.map_or("no address".to_string(), |e| e.to_string())
    )))
}

fn parse_query(words: &[RingElement], state: &State) -> Result<Vec<RingElement>> {
    if words.len() < 2 {
        return Err(Error::MalformedFrame("query frame too short".into()));
    }
    if words[0] != PROTOCOL_VERSION {
        return Err(Error::VersionMismatch {
            local: PROTOCOL_VERSION,
            remote: words[0],
        });
    }
    let m = state.db.read().unwrap().m;
    if words[1] != m as u64 || words.len() != 2 + m {
        return Err(Error::Protocol(format!(
            "query has {} attributes, database has {m}",
            words[1]
        )));
    }
    Ok(words[2..].to_vec())
}

fn rendezvous(state: &State, session: u32, part: Pending) -> Result<()> {
    let other = {
        let mut pending = state.pending.lock().unwrap();
        let now = Instant::now();
        pending.retain(|id, (since, _)| {
            let keep = now.duration_since(*since) < PENDING_TTL;
            if !keep {
                log::warn!("{}: session {id} abandoned", state.cfg.party);
            }
            keep
        });
        match pending.remove(&session) {
            None => {
                pending.insert(session, (now, part));
                return Ok(());
            }
            Some((_, other)) => other,
        }
    };
    match (part, other) {
        (Pending::Client(c, q), Pending::Peer(p, seg)) | (Pending::Peer(p, seg), Pending::Client(c, q)) => {
            if !state.used_segments.lock().unwrap().insert(seg) {
                return Err(Error::Protocol(format!("pool segment {seg} requested twice")));
            }
            run_session(state, session, c, p, q, seg)
        }
        _ => Err(Error::Protocol(format!("duplicate connection for session {session}"))),
    }
}

fn run_session(
    state: &State,
    session: u32,
    client: TcpStream,
    peer: TcpStream,
    q: Vec<RingElement>,
    segment: usize,
) -> Result<()> {
    let db = Arc::clone(&state.db.read().unwrap());
    let pool = state.pool.segment(segment, &state.segment)?;
    let channel = TcpChannel::new(peer, state.ring, session, state.cfg.latency)?;
    let mut s = Session::new(
        state.cfg.party,
        state.ring,
        state.cfg.mode,
        Box::new(channel),
        Box::new(pool),
        rand::random(),
    );
    let start = Instant::now();
    let out = run_query(&mut s, &db, &q)?;
    let wall = start.elapsed();

    let (meter, _) = s.into_parts();
    let report = meter_report(session, &meter, db.n, db.m, out.k(), wall)?;
    log::info!(
        "{}: session {session} done, k = {}, {} rounds, {} bytes sent",
        state.cfg.party,
        report.k,
        report.rounds,
        report.bytes_tx
    );
    state.metrics.lock().unwrap().push(report);

    let mut payload = (out.k() as u32).to_le_bytes().to_vec();
    for row in &out.pool {
        payload.extend(encode_words(state.ring, row));
    }
    let mut w = BufWriter::new(client);
    Frame::new(FrameKind::Result, session, payload).write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Parses a result frame payload: `k: u32 LE`, then `k` rows of `m` words.
pub fn decode_result(ring: Ring, m: usize, payload: &[u8]) -> Result<Vec<Vec<RingElement>>> {
    if payload.len() < 4 {
        return Err(Error::MalformedFrame("result shorter than its count".into()));
    }
    let k = u32::from_le_bytes(payload[..4].try_into().unwrap()) as usize;
    let words = decode_words(ring, &payload[4..])?;
    if words.len() != k * m {
        return Err(Error::MalformedFrame(format!(
            "result announces {k} rows of {m} but carries {} words",
            words.len()
        )));
    }
    Ok(words.chunks(m.max(1)).take(k).map(<[_]>::to_vec).collect())
}
