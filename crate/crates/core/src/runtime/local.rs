//! Both servers in one process, one thread each.

use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::correlated::{RandomnessBudget, StreamingDealer};
use crate::error::{Error, Result};
use crate::gadgets::MultiBaMode;
use crate::plaintext::PlainDatabase;
use crate::protocol::{default_vmax, run_query, QueryOutput};
use crate::ring::{Ring, RingElement};
use crate::runtime::channel::{Channel, LocalChannel};
use crate::runtime::session::{Meter, Session, Transcript};
use crate::sharing::PartyId;
use crate::store::{reconstruct_rows, share_database, share_query};

#[derive(Clone, Debug)]
pub struct LocalConfig {
    pub ring: Ring,
    pub mode: MultiBaMode,
    pub latency: Duration,
    /// Seeds the dealer and the parties' local randomness.
    pub seed: u64,
    pub vmax: RingElement,
}

impl LocalConfig {
    pub fn new(ring: Ring) -> Self {
        LocalConfig {
            ring,
            mode: MultiBaMode::default(),
            latency: Duration::ZERO,
            seed: 0,
            vmax: default_vmax(ring),
        }
    }

    pub fn with_mode(mut self, mode: MultiBaMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_vmax(mut self, vmax: RingElement) -> Self {
        self.vmax = vmax;
        self
    }
}

/// Outputs and counters of both parties, indexed by party.
#[derive(Debug)]
pub struct PairRun<T> {
    pub outputs: [T; 2],
    pub meters: [Meter; 2],
    pub transcripts: [Transcript; 2],
    pub consumed: [RandomnessBudget; 2],
}

/// Runs `f` as both parties over an in-process channel with a streaming
/// dealer.
pub fn run_pair<T, F>(cfg: &LocalConfig, f: F) -> Result<PairRun<T>>
where
    T: Send,
    F: Fn(&mut Session) -> Result<T> + Sync,
{
    let (a, b) = LocalChannel::pair(cfg.latency);
    run_pair_over(cfg, [Box::new(a), Box::new(b)], f)
}

/// Like [`run_pair`] but over caller-supplied channel endpoints
/// (first party's endpoint first).
pub fn run_pair_over<T, F>(cfg: &LocalConfig, channels: [Box<dyn Channel>; 2], f: F) -> Result<PairRun<T>>
where
    T: Send,
    F: Fn(&mut Session) -> Result<T> + Sync,
{
    let (d1, d2) = StreamingDealer::pair(cfg.ring, cfg.vmax, cfg.seed);
    let [c1, c2] = channels;
    let s1 = Session::new(PartyId::First, cfg.ring, cfg.mode, c1, Box::new(d1), cfg.seed);
    let s2 = Session::new(PartyId::Second, cfg.ring, cfg.mode, c2, Box::new(d2), cfg.seed);
    let f = &f;
    let run = |mut s: Session| {
        let out = f(&mut s);
        let consumed = s.randomness().consumed();
        let (meter, transcript) = s.into_parts();
        out.map(|o| (o, meter, transcript, consumed))
    };
    let (r1, r2) = thread::scope(|scope| {
        let h = thread::Builder::new()
            .name("party-2".into())
            .spawn_scoped(scope, move || run(s2))
            .expect("spawn party thread");
        let r1 = run(s1);
        (r1, h.join().expect("party thread panicked"))
    });
    match (r1, r2) {
        (Ok(a), Ok(b)) => Ok(PairRun {
            outputs: [a.0, b.0],
            meters: [a.1, b.1],
            transcripts: [a.2, b.2],
            consumed: [a.3, b.3],
        }),
        // A failing party closes its channel; report the root cause.
        (Err(Error::ChannelClosed), Err(e)) | (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

/// A complete in-process query: reconstructed rows plus both parties' views.
#[derive(Debug)]
pub struct LocalQuery {
    pub rows: Vec<Vec<u64>>,
    pub run: PairRun<QueryOutput>,
    /// Online phase only; sharing is excluded.
    pub wall: Duration,
}

impl LocalQuery {
    pub fn k(&self) -> usize {
        self.rows.len()
    }
}

/// Shares `db` and `q` (seeded from `cfg.seed`), runs the query in-process
/// and reconstructs the result.
pub fn local_query(cfg: &LocalConfig, db: &PlainDatabase, q: &[u64]) -> Result<LocalQuery> {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let dbs = share_database(cfg.ring, db, cfg.vmax, &mut rng)?;
    let qs = share_query(cfg.ring, q, cfg.vmax, &mut rng)?;
    let start = Instant::now();
    let run = run_pair(cfg, |s| {
        let i = s.party().index();
        run_query(s, &dbs[i], &qs[i])
    })?;
    let wall = start.elapsed();
    let rows = reconstruct_rows(cfg.ring, &run.outputs[0].pool, &run.outputs[1].pool)?;
    Ok(LocalQuery { rows, run, wall })
}
