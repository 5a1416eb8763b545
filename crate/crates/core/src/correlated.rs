//! Offline correlated randomness: Beaver triples (arithmetic and packed
//! binary), daBits and the dealt sharing of the sentinel `vMAX`.
//!
//! Two ways of handing randomness to the online phase are provided:
//!
//! * [`CorrelationPool`]: a finite, pre-dealt pool (also the on-disk format
//!   consumed by servers). Requests past its end fail with
//!   [`Error::RandomnessExhausted`]; nothing is ever reused.
//! * [`StreamingDealer`]: a dealer shared by two in-process parties that
//!   deals on demand. Each endpoint only ever receives its own halves, so
//!   memory stays bounded by the lag between the parties instead of by the
//!   worst-case query budget.
//!
//! Binary triples are packed: one `l`-bit word carries `l` independent AND
//! triples, one per bit lane.

use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::gadgets::MultiBaMode;
use crate::protocol::cost::QueryCost;
use crate::ring::{Ring, RingElement};
use crate::sharing::PartyId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CorrelationKind {
    ArithTriple,
    BinTriple,
    DaBit,
}

impl fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrelationKind::ArithTriple => "arithmetic triples",
            CorrelationKind::BinTriple => "binary triples",
            CorrelationKind::DaBit => "daBits",
        })
    }
}

/// One party's shares of a batch of triples, structure-of-arrays.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripleBatch {
    pub u: Vec<RingElement>,
    pub v: Vec<RingElement>,
    pub w: Vec<RingElement>,
}

impl TripleBatch {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    fn with_capacity(n: usize) -> Self {
        TripleBatch {
            u: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            w: Vec::with_capacity(n),
        }
    }
}

/// One party's shares of a batch of daBits: the same random bit shared
/// under XOR (`bits`) and additively (`arith`).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DaBitBatch {
    pub bits: Vec<bool>,
    pub arith: Vec<RingElement>,
}

impl DaBitBatch {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Correlated randomness needed by one query, in consumption units.
///
/// `bin_triples` counts packed `l`-bit words.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RandomnessBudget {
    pub secext: u64,
    pub arith_triples: u64,
    pub bin_triples: u64,
    pub dabits: u64,
}

impl RandomnessBudget {
    pub fn covers(&self, other: &RandomnessBudget) -> bool {
        self.arith_triples >= other.arith_triples
            && self.bin_triples >= other.bin_triples
            && self.dabits >= other.dabits
    }

    pub fn times(&self, factor: u64) -> RandomnessBudget {
        RandomnessBudget {
            secext: self.secext * factor,
            arith_triples: self.arith_triples * factor,
            bin_triples: self.bin_triples * factor,
            dabits: self.dabits * factor,
        }
    }
}

/// Randomness required by a query over `n` tuples of `m` attributes that
/// returns up to `k_max` skyline tuples.
///
/// The count is derived from the exact batch schedule of the online phase,
/// so the SecExt component equals `n*m + k*n*(2+m) + n` at `k = k_max`.
pub fn budget_for_query(
    ring: Ring,
    n: usize,
    m: usize,
    k_max: usize,
    mode: MultiBaMode,
) -> Result<RandomnessBudget> {
    if k_max == 0 {
        return Err(Error::InvalidArgument(
            "k_max must be at least 1 (every query fetches once)".into(),
        ));
    }
    if n == 0 || m == 0 {
        return Err(Error::Empty("database"));
    }
    Ok(QueryCost::new(ring, n, m, k_max, mode).randomness)
}

/// Source of correlated randomness for one party of one session.
pub trait CorrelationSource: Send {
    fn arith_triples(&mut self, count: usize) -> Result<TripleBatch>;
    fn bin_triples(&mut self, count: usize) -> Result<TripleBatch>;
    fn dabits(&mut self, count: usize) -> Result<DaBitBatch>;
    /// This party's share of the sentinel `vMAX`.
    fn vmax_share(&self) -> RingElement;
    /// Units handed out so far.
    fn consumed(&self) -> RandomnessBudget;
}

/// Trusted dealer producing both parties' halves.
pub struct Dealer<R> {
    ring: Ring,
    rng: R,
}

impl<R: Rng> Dealer<R> {
    pub fn new(ring: Ring, rng: R) -> Self {
        Dealer { ring, rng }
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }

    pub fn arith_triples(&mut self, count: usize) -> (TripleBatch, TripleBatch) {
        let mut a = TripleBatch::with_capacity(count);
        let mut b = TripleBatch::with_capacity(count);
        for _ in 0..count {
            self.push_arith(&mut a, &mut b);
        }
        (a, b)
    }

    pub fn bin_triples(&mut self, count: usize) -> (TripleBatch, TripleBatch) {
        let mut a = TripleBatch::with_capacity(count);
        let mut b = TripleBatch::with_capacity(count);
        for _ in 0..count {
            self.push_bin(&mut a, &mut b);
        }
        (a, b)
    }

    pub fn dabits(&mut self, count: usize) -> (DaBitBatch, DaBitBatch) {
        let mut a = DaBitBatch::default();
        let mut b = DaBitBatch::default();
        for _ in 0..count {
            let (x, y) = self.one_dabit();
            a.bits.push(x.0);
            a.arith.push(x.1);
            b.bits.push(y.0);
            b.arith.push(y.1);
        }
        (a, b)
    }

    /// Fresh sharing of a public constant.
    pub fn share_constant(&mut self, c: RingElement) -> (RingElement, RingElement) {
        let first = self.ring.random(&mut self.rng);
        (first, self.ring.sub(self.ring.reduce(c), first))
    }

    #[inline]
    fn push_arith(&mut self, a: &mut TripleBatch, b: &mut TripleBatch) {
        let r = self.ring;
        let (u1, u2) = (r.random(&mut self.rng), r.random(&mut self.rng));
        let (v1, v2) = (r.random(&mut self.rng), r.random(&mut self.rng));
        let w1 = r.random(&mut self.rng);
        let w = r.mul(r.add(u1, u2), r.add(v1, v2));
        a.u.push(u1);
        a.v.push(v1);
        a.w.push(w1);
        b.u.push(u2);
        b.v.push(v2);
        b.w.push(r.sub(w, w1));
    }

    #[inline]
    fn push_bin(&mut self, a: &mut TripleBatch, b: &mut TripleBatch) {
        let r = self.ring;
        let (u1, u2) = (r.random(&mut self.rng), r.random(&mut self.rng));
        let (v1, v2) = (r.random(&mut self.rng), r.random(&mut self.rng));
        let w1 = r.random(&mut self.rng);
        let w = (u1 ^ u2) & (v1 ^ v2);
        a.u.push(u1);
        a.v.push(v1);
        a.w.push(w1);
        b.u.push(u2);
        b.v.push(v2);
        b.w.push(w ^ w1);
    }

    #[inline]
    fn one_dabit(&mut self) -> ((bool, RingElement), (bool, RingElement)) {
        let r = self.ring;
        let bit: bool = self.rng.gen();
        let b1: bool = self.rng.gen();
        let a1 = r.random(&mut self.rng);
        let a2 = r.sub(bit as u64, a1);
        ((b1, a1), (bit ^ b1, a2))
    }
}

/// Deals `count` triples of the given kind (`DaBit` is not a triple kind).
pub fn deal_triples<R: Rng>(
    ring: Ring,
    kind: CorrelationKind,
    count: usize,
    rng: R,
) -> Result<(TripleBatch, TripleBatch)> {
    let mut dealer = Dealer::new(ring, rng);
    match kind {
        CorrelationKind::ArithTriple => Ok(dealer.arith_triples(count)),
        CorrelationKind::BinTriple => Ok(dealer.bin_triples(count)),
        CorrelationKind::DaBit => Err(Error::InvalidArgument(
            "daBits are dealt with deal_dabits".into(),
        )),
    }
}

pub fn deal_dabits<R: Rng>(ring: Ring, count: usize, rng: R) -> (DaBitBatch, DaBitBatch) {
    Dealer::new(ring, rng).dabits(count)
}

/// Finite per-party pool of correlated randomness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrelationPool {
    ring: Ring,
    party: PartyId,
    arith: TripleBatch,
    bin: TripleBatch,
    dabits: DaBitBatch,
    vmax: RingElement,
    cursor: [usize; 3],
}

const POOL_MAGIC: &[u8; 5] = b"SSKR1";

impl CorrelationPool {
    pub fn new(
        ring: Ring,
        party: PartyId,
        arith: TripleBatch,
        bin: TripleBatch,
        dabits: DaBitBatch,
        vmax: RingElement,
    ) -> Self {
        CorrelationPool {
            ring,
            party,
            arith,
            bin,
            dabits,
            vmax,
            cursor: [0; 3],
        }
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    /// Total units held (consumed or not).
    pub fn capacity(&self) -> RandomnessBudget {
        RandomnessBudget {
            secext: 0,
            arith_triples: self.arith.len() as u64,
            bin_triples: self.bin.len() as u64,
            dabits: self.dabits.len() as u64,
        }
    }

    pub fn remaining(&self) -> RandomnessBudget {
        let cap = self.capacity();
        RandomnessBudget {
            secext: 0,
            arith_triples: cap.arith_triples - self.cursor[0] as u64,
            bin_triples: cap.bin_triples - self.cursor[1] as u64,
            dabits: cap.dabits - self.cursor[2] as u64,
        }
    }

    /// The `index`-th disjoint slice of size `budget`, as a fresh pool.
    ///
    /// Both servers hold pools dealt together, so equal indices select
    /// matching halves.
    pub fn segment(&self, index: usize, budget: &RandomnessBudget) -> Result<CorrelationPool> {
        fn slice_triples(
            t: &TripleBatch,
            index: usize,
            size: usize,
            kind: CorrelationKind,
        ) -> Result<TripleBatch> {
            let start = index * size;
            let end = start + size;
            if end > t.len() {
                return Err(Error::RandomnessExhausted {
                    kind,
                    requested: end,
                    remaining: t.len(),
                });
            }
            Ok(TripleBatch {
                u: t.u[start..end].to_vec(),
                v: t.v[start..end].to_vec(),
                w: t.w[start..end].to_vec(),
            })
        }
        let arith = slice_triples(
            &self.arith,
            index,
            budget.arith_triples as usize,
            CorrelationKind::ArithTriple,
        )?;
        let bin = slice_triples(
            &self.bin,
            index,
            budget.bin_triples as usize,
            CorrelationKind::BinTriple,
        )?;
        let size = budget.dabits as usize;
        let (start, end) = (index * size, index * size + size);
        if end > self.dabits.len() {
            return Err(Error::RandomnessExhausted {
                kind: CorrelationKind::DaBit,
                requested: end,
                remaining: self.dabits.len(),
            });
        }
        let dabits = DaBitBatch {
            bits: self.dabits.bits[start..end].to_vec(),
            arith: self.dabits.arith[start..end].to_vec(),
        };
        Ok(CorrelationPool::new(
            self.ring, self.party, arith, bin, dabits, self.vmax,
        ))
    }

    /// Number of whole segments of size `budget` this pool can serve.
    pub fn segments(&self, budget: &RandomnessBudget) -> usize {
        let per = |have: usize, need: u64| {
            if need == 0 {
                usize::MAX
            } else {
                have / need as usize
            }
        };
        per(self.arith.len(), budget.arith_triples)
            .min(per(self.bin.len(), budget.bin_triples))
            .min(per(self.dabits.len(), budget.dabits))
    }

    fn take_triples(
        batch: &TripleBatch,
        cursor: &mut usize,
        count: usize,
        kind: CorrelationKind,
    ) -> Result<TripleBatch> {
        let remaining = batch.len() - *cursor;
        if count > remaining {
            return Err(Error::RandomnessExhausted {
                kind,
                requested: count,
                remaining,
            });
        }
        let range = *cursor..*cursor + count;
        *cursor += count;
        Ok(TripleBatch {
            u: batch.u[range.clone()].to_vec(),
            v: batch.v[range.clone()].to_vec(),
            w: batch.w[range].to_vec(),
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let bw = self.ring.byte_width();
        out.write_all(POOL_MAGIC)?;
        out.write_all(&[self.ring.bits() as u8, self.party.as_u8()])?;
        for count in [
            self.arith.len() as u64,
            self.bin.len() as u64,
            self.dabits.len() as u64,
            1u64,
        ] {
            out.write_all(&count.to_le_bytes())?;
        }
        let put = |x: u64, out: &mut W| out.write_all(&x.to_le_bytes()[..bw]);
        for t in [&self.arith, &self.bin] {
            for i in 0..t.len() {
                put(t.u[i], &mut out)?;
                put(t.v[i], &mut out)?;
                put(t.w[i], &mut out)?;
            }
        }
        for i in 0..self.dabits.len() {
            put(self.dabits.bits[i] as u64, &mut out)?;
            put(self.dabits.arith[i], &mut out)?;
        }
        put(self.vmax, &mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<Rd: Read>(mut input: Rd) -> Result<Self> {
        let mut magic = [0u8; 5];
        input.read_exact(&mut magic)?;
        if &magic != POOL_MAGIC {
            return Err(Error::Format("not a randomness pool (bad magic)".into()));
        }
        let mut hdr = [0u8; 2];
        input.read_exact(&mut hdr)?;
        let ring = Ring::new(hdr[0] as u32)?;
        let party = PartyId::from_u8(hdr[1])?;
        let mut counts = [0u64; 4];
        for c in counts.iter_mut() {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            *c = u64::from_le_bytes(b);
        }
        if counts[3] != 1 {
            return Err(Error::Format(format!(
                "expected one vMAX share, header says {}",
                counts[3]
            )));
        }
        let bw = ring.byte_width();
        let word = |input: &mut Rd| -> Result<u64> {
            let mut b = [0u8; 8];
            input.read_exact(&mut b[..bw])?;
            let x = u64::from_le_bytes(b);
            if x & !ring.mask() != 0 {
                return Err(Error::Format("share value exceeds ring width".into()));
            }
            Ok(x)
        };
        let triples = |count: u64, input: &mut Rd| -> Result<TripleBatch> {
            let mut t = TripleBatch::default();
            for _ in 0..count {
                t.u.push(word(input)?);
                t.v.push(word(input)?);
                t.w.push(word(input)?);
            }
            Ok(t)
        };
        let arith = triples(counts[0], &mut input)?;
        let bin = triples(counts[1], &mut input)?;
        let mut dabits = DaBitBatch::default();
        for _ in 0..counts[2] {
            let bit = word(&mut input)?;
            if bit > 1 {
                return Err(Error::Format("daBit binary share is not a bit".into()));
            }
            dabits.bits.push(bit == 1);
            dabits.arith.push(word(&mut input)?);
        }
        let vmax = word(&mut input)?;
        Ok(CorrelationPool::new(ring, party, arith, bin, dabits, vmax))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

impl CorrelationSource for CorrelationPool {
    fn arith_triples(&mut self, count: usize) -> Result<TripleBatch> {
        Self::take_triples(
            &self.arith,
            &mut self.cursor[0],
            count,
            CorrelationKind::ArithTriple,
        )
    }

    fn bin_triples(&mut self, count: usize) -> Result<TripleBatch> {
        Self::take_triples(
            &self.bin,
            &mut self.cursor[1],
            count,
            CorrelationKind::BinTriple,
        )
    }

    fn dabits(&mut self, count: usize) -> Result<DaBitBatch> {
        let cursor = &mut self.cursor[2];
        let remaining = self.dabits.len() - *cursor;
        if count > remaining {
            return Err(Error::RandomnessExhausted {
                kind: CorrelationKind::DaBit,
                requested: count,
                remaining,
            });
        }
        let range = *cursor..*cursor + count;
        *cursor += count;
        Ok(DaBitBatch {
            bits: self.dabits.bits[range.clone()].to_vec(),
            arith: self.dabits.arith[range].to_vec(),
        })
    }

    fn vmax_share(&self) -> RingElement {
        self.vmax
    }

    fn consumed(&self) -> RandomnessBudget {
        RandomnessBudget {
            secext: 0,
            arith_triples: self.cursor[0] as u64,
            bin_triples: self.cursor[1] as u64,
            dabits: self.cursor[2] as u64,
        }
    }
}

/// Deals a matching pair of pools covering `budget`, plus a fresh sharing
/// of `vmax`.
pub fn deal_pools<R: Rng>(
    ring: Ring,
    budget: &RandomnessBudget,
    vmax: RingElement,
    rng: R,
) -> (CorrelationPool, CorrelationPool) {
    let mut dealer = Dealer::new(ring, rng);
    let (a1, a2) = dealer.arith_triples(budget.arith_triples as usize);
    let (b1, b2) = dealer.bin_triples(budget.bin_triples as usize);
    let (d1, d2) = dealer.dabits(budget.dabits as usize);
    let (v1, v2) = dealer.share_constant(vmax);
    (
        CorrelationPool::new(ring, PartyId::First, a1, b1, d1, v1),
        CorrelationPool::new(ring, PartyId::Second, a2, b2, d2, v2),
    )
}

#[derive(Default)]
struct TripleQueue {
    u: VecDeque<u64>,
    v: VecDeque<u64>,
    w: VecDeque<u64>,
}

impl TripleQueue {
    fn len(&self) -> usize {
        self.u.len()
    }

    fn drain(&mut self, count: usize) -> TripleBatch {
        TripleBatch {
            u: take_front(&mut self.u, count),
            v: take_front(&mut self.v, count),
            w: take_front(&mut self.w, count),
        }
    }

    fn extend(&mut self, t: TripleBatch) {
        append(&mut self.u, t.u);
        append(&mut self.v, t.v);
        append(&mut self.w, t.w);
    }
}

fn append<T>(q: &mut VecDeque<T>, items: Vec<T>) {
    if q.is_empty() {
        *q = VecDeque::from(items);
    } else {
        q.extend(items);
    }
}

fn take_front<T>(q: &mut VecDeque<T>, count: usize) -> Vec<T> {
    if count == q.len() {
        Vec::from(std::mem::take(q))
    } else {
        q.drain(..count).collect()
    }
}

#[derive(Default)]
struct PartyQueues {
    arith: TripleQueue,
    bin: TripleQueue,
    dabit_bits: VecDeque<bool>,
    dabit_arith: VecDeque<u64>,
}

struct DealerState {
    dealer: Dealer<ChaCha12Rng>,
    queues: [PartyQueues; 2],
}

/// On-demand dealer shared by the two parties of one in-process session.
pub struct StreamingDealer;

impl StreamingDealer {
    /// Creates the two endpoints of a fresh dealer seeded with `seed`.
    pub fn pair(ring: Ring, vmax: RingElement, seed: u64) -> (DealerEndpoint, DealerEndpoint) {
        let mut dealer = Dealer::new(ring, ChaCha12Rng::seed_from_u64(seed));
        let (v1, v2) = dealer.share_constant(vmax);
        let state = Arc::new(Mutex::new(DealerState {
            dealer,
            queues: Default::default(),
        }));
        let endpoint = |party, vmax| DealerEndpoint {
            party,
            state: Arc::clone(&state),
            vmax,
            consumed: RandomnessBudget::default(),
        };
        (endpoint(PartyId::First, v1), endpoint(PartyId::Second, v2))
    }
}

/// One party's handle on a [`StreamingDealer`].
pub struct DealerEndpoint {
    party: PartyId,
    state: Arc<Mutex<DealerState>>,
    vmax: RingElement,
    consumed: RandomnessBudget,
}

impl DealerEndpoint {
    fn with_state<T>(&self, f: impl FnOnce(&mut DealerState, usize, usize) -> T) -> T {
        let mut guard = self.state.lock().expect("dealer state poisoned");
        let me = self.party.index();
        f(&mut guard, me, 1 - me)
    }
}

impl CorrelationSource for DealerEndpoint {
    fn arith_triples(&mut self, count: usize) -> Result<TripleBatch> {
        self.consumed.arith_triples += count as u64;
        Ok(self.with_state(|st, me, other| {
            let have = st.queues[me].arith.len();
            if have < count {
                let (a, b) = st.dealer.arith_triples(count - have);
                let (mine, theirs) = if me == 0 { (a, b) } else { (b, a) };
                st.queues[other].arith.extend(theirs);
                if have == 0 {
                    return mine;
                }
                st.queues[me].arith.extend(mine);
            }
            st.queues[me].arith.drain(count)
        }))
    }

    fn bin_triples(&mut self, count: usize) -> Result<TripleBatch> {
        self.consumed.bin_triples += count as u64;
        Ok(self.with_state(|st, me, other| {
            let have = st.queues[me].bin.len();
            if have < count {
                let (a, b) = st.dealer.bin_triples(count - have);
                let (mine, theirs) = if me == 0 { (a, b) } else { (b, a) };
                st.queues[other].bin.extend(theirs);
                if have == 0 {
                    return mine;
                }
                st.queues[me].bin.extend(mine);
            }
            st.queues[me].bin.drain(count)
        }))
    }

    fn dabits(&mut self, count: usize) -> Result<DaBitBatch> {
        self.consumed.dabits += count as u64;
        Ok(self.with_state(|st, me, other| {
            let have = st.queues[me].dabit_bits.len();
            if have < count {
                let (a, b) = st.dealer.dabits(count - have);
                let (mine, theirs) = if me == 0 { (a, b) } else { (b, a) };
                st.queues[me].dabit_bits.extend(mine.bits);
                st.queues[me].dabit_arith.extend(mine.arith);
                st.queues[other].dabit_bits.extend(theirs.bits);
                st.queues[other].dabit_arith.extend(theirs.arith);
            }
            let q = &mut st.queues[me];
            DaBitBatch {
                bits: take_front(&mut q.dabit_bits, count),
                arith: take_front(&mut q.dabit_arith, count),
            }
        }))
    }

    fn vmax_share(&self) -> RingElement {
        self.vmax
    }

    fn consumed(&self) -> RandomnessBudget {
        self.consumed
    }
}
