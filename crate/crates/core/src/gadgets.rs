//! Online sub-protocols: Beaver multiplication and AND, secure MSB
//! extraction (comparison), binary-times-arithmetic multiplication,
//! oblivious selection and the oblivious tree minimum.
//!
//! Every function is executed by both parties in lockstep on their own
//! shares and is vectorized: one message per round regardless of length.
//! Shared bits are XOR shares held as `bool`; on the wire they are packed
//! `l` to a word.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ring::RingElement;
use crate::runtime::session::{Label, Session};
use crate::sharing::{beaver, check_len, PartyId};

/// How [`multi_ba`] is realized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum MultiBaMode {
    /// daBit conversion fused with one Beaver multiplication. One round.
    #[default]
    DaBit,
    /// Each party sends both candidate messages `(mu ^ x_i) * y_i - r_i`.
    /// One round and no correlated randomness, but the difference of the
    /// two messages reveals the sender's share of `y` to the receiver.
    TwoMessage,
}

pub(crate) fn pack_bits(bits: &[bool], lanes: usize) -> Vec<u64> {
    let mut out = vec![0u64; bits.len().div_ceil(lanes)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / lanes] |= (b as u64) << (i % lanes);
    }
    out
}

pub(crate) fn unpack_bits(words: &[u64], lanes: usize, len: usize) -> Vec<bool> {
    (0..len)
        .map(|i| (words[i / lanes] >> (i % lanes)) & 1 == 1)
        .collect()
}

/// Beaver multiplication of shared vectors.
pub fn mul(s: &mut Session, x: &[RingElement], y: &[RingElement]) -> Result<Vec<RingElement>> {
    check_len("mul operands", x.len(), y.len())?;
    let n = x.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let ring = s.ring();
    let t = s.randomness().arith_triples(n)?;
    let mut msg = Vec::with_capacity(2 * n);
    msg.extend((0..n).map(|i| ring.sub(x[i], t.u[i])));
    msg.extend((0..n).map(|i| ring.sub(y[i], t.v[i])));
    let peer = s.exchange(Label::MulOpen, msg.clone())?;
    let party = s.party();
    Ok((0..n)
        .map(|i| {
            let e = ring.add(msg[i], peer[i]);
            let f = ring.add(msg[n + i], peer[n + i]);
            beaver::combine(ring, party, e, f, t.u[i], t.v[i], t.w[i])
        })
        .collect())
}

/// Beaver AND on packed words: bit lane `j` of word `i` is an independent
/// gate. Words carry `l` lanes.
pub fn and_words(s: &mut Session, x: &[u64], y: &[u64]) -> Result<Vec<u64>> {
    check_len("and operands", x.len(), y.len())?;
    let n = x.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let t = s.randomness().bin_triples(n)?;
    let mut msg = Vec::with_capacity(2 * n);
    msg.extend((0..n).map(|i| x[i] ^ t.u[i]));
    msg.extend((0..n).map(|i| y[i] ^ t.v[i]));
    let peer = s.exchange(Label::AndOpen, msg.clone())?;
    let party = s.party();
    Ok((0..n)
        .map(|i| {
            let e = msg[i] ^ peer[i];
            let f = msg[n + i] ^ peer[n + i];
            beaver::combine_bin(party, e, f, t.u[i], t.v[i], t.w[i])
        })
        .collect())
}

/// Element-wise AND of shared bit vectors, packed into one round.
pub fn and_bits(s: &mut Session, x: &[bool], y: &[bool]) -> Result<Vec<bool>> {
    check_len("and operands", x.len(), y.len())?;
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let lanes = s.ring().bits() as usize;
    let z = and_words(s, &pack_bits(x, lanes), &pack_bits(y, lanes))?;
    Ok(unpack_bits(&z, lanes, x.len()))
}

/// Opens shared bits to both parties. The query loop only ever opens its
/// stop flag through this.
pub fn reveal_bits(s: &mut Session, bits: &[bool]) -> Result<Vec<bool>> {
    let lanes = s.ring().bits() as usize;
    let own = pack_bits(bits, lanes);
    let peer = s.exchange(Label::Reveal, own.clone())?;
    s.count_revealed(bits.len());
    let words: Vec<u64> = own.iter().zip(&peer).map(|(a, b)| a ^ b).collect();
    Ok(unpack_bits(&words, lanes, bits.len()))
}

/// Gate schedule of the carry circuit used by [`sec_ext`].
///
/// Positions `0..l-1` feed a Kogge-Stone style reduction in which only the
/// carry into bit `l-1` is materialized, so every level pairs adjacent
/// blocks and the lowest block never needs its propagate term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PpaCircuitPlan {
    pub width: u32,
    /// AND gates per round, generate round first.
    pub level_gates: Vec<usize>,
}

impl PpaCircuitPlan {
    pub fn new(width: u32) -> Self {
        let positions = width as usize - 1;
        let mut level_gates = Vec::new();
        if positions > 0 {
            level_gates.push(positions);
        }
        let mut nodes = positions;
        while nodes > 1 {
            let pairs = nodes / 2;
            level_gates.push(2 * pairs - 1);
            nodes = pairs + nodes % 2;
        }
        PpaCircuitPlan { width, level_gates }
    }

    pub fn and_gates(&self) -> usize {
        self.level_gates.iter().sum()
    }

    /// Number of combine levels (excluding the generate round).
    pub fn combine_depth(&self) -> usize {
        self.level_gates.len().saturating_sub(1)
    }

    /// Communication rounds of one [`sec_ext`] call.
    pub fn rounds(&self) -> usize {
        self.level_gates.len()
    }
}

/// Transposes a 64x64 bit matrix in place: afterwards bit `r` of word `c`
/// equals the former bit `c` of word `r`.
fn transpose64(a: &mut [u64; 64]) {
    let mut j = 32;
    let mut m: u64 = 0x0000_0000_FFFF_FFFF;
    while j != 0 {
        let mut k = 0;
        while k < 64 {
            let t = ((a[k] >> j) ^ a[k + j]) & m;
            a[k + j] ^= t;
            a[k] ^= t << j;
            k = (k + j + 1) & !j;
        }
        j >>= 1;
        m ^= m << j;
    }
}

/// Bit planes of `values` grouped in chunks of `l`: plane `i` of chunk `c`
/// (at `i * chunks + c`) holds bit `i` of values `c*l .. c*l + l` in lanes.
fn bit_planes(values: &[u64], l: usize, chunks: usize) -> Vec<u64> {
    let mut planes = vec![0u64; l * chunks];
    if l == 64 {
        let mut block = [0u64; 64];
        for (c, chunk) in values.chunks(64).enumerate() {
            block[..chunk.len()].copy_from_slice(chunk);
            block[chunk.len()..].fill(0);
            transpose64(&mut block);
            for (i, &w) in block.iter().enumerate() {
                planes[i * chunks + c] = w;
            }
        }
    } else {
        for (idx, &v) in values.iter().enumerate() {
            let (c, lane) = (idx / l, idx % l);
            for i in 0..l {
                planes[i * chunks + c] |= ((v >> i) & 1) << lane;
            }
        }
    }
    planes
}

/// Secure MSB extraction: shares of `msb(a_k - b_k)` for every `k`, i.e. of
/// `a_k < b_k` when both operands and their difference lie in the signed
/// range.
///
/// Each party splits its share of `d = a - b` into bits; the first party's
/// bits and the second party's bits are the two binary-shared addends of a
/// carry circuit (each party holds a zero share of the other's addend).
pub fn sec_ext(s: &mut Session, a: &[RingElement], b: &[RingElement]) -> Result<Vec<bool>> {
    check_len("sec_ext operands", a.len(), b.len())?;
    let n = a.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    s.count_secext(n);
    let ring = s.ring();
    let l = ring.bits() as usize;
    let chunks = n.div_ceil(l);
    let d: Vec<u64> = a.iter().zip(b).map(|(&x, &y)| ring.sub(x, y)).collect();
    let planes = bit_planes(&d, l, chunks);
    let positions = l - 1;
    let first = s.party().is_first();

    let root = if positions == 0 {
        vec![0u64; chunks]
    } else {
        let own = &planes[..positions * chunks];
        let zeros = vec![0u64; own.len()];
        let (x, y) = if first {
            (own, &zeros[..])
        } else {
            (&zeros[..], own)
        };
        let mut g = and_words(s, x, y)?;
        // Share of p = X ^ Y is simply the party's own bits.
        let mut p = own.to_vec();
        let mut nodes = positions;
        while nodes > 1 {
            let pairs = nodes / 2;
            let gates = 2 * pairs - 1;
            let mut xin = Vec::with_capacity(gates * chunks);
            let mut yin = Vec::with_capacity(gates * chunks);
            for j in 0..pairs {
                let (hi, lo) = (2 * j + 1, 2 * j);
                xin.extend_from_slice(&p[hi * chunks..(hi + 1) * chunks]);
                yin.extend_from_slice(&g[lo * chunks..(lo + 1) * chunks]);
            }
            for j in 1..pairs {
                let (hi, lo) = (2 * j + 1, 2 * j);
                xin.extend_from_slice(&p[hi * chunks..(hi + 1) * chunks]);
                yin.extend_from_slice(&p[lo * chunks..(lo + 1) * chunks]);
            }
            let z = and_words(s, &xin, &yin)?;
            let next = pairs + nodes % 2;
            let mut ng = vec![0u64; next * chunks];
            let mut np = vec![0u64; next * chunks];
            for j in 0..pairs {
                let hi = 2 * j + 1;
                for c in 0..chunks {
                    ng[j * chunks + c] = g[hi * chunks + c] ^ z[j * chunks + c];
                    if j > 0 {
                        np[j * chunks + c] = z[(pairs + j - 1) * chunks + c];
                    }
                }
            }
            if nodes % 2 == 1 {
                let last = nodes - 1;
                ng[pairs * chunks..].copy_from_slice(&g[last * chunks..(last + 1) * chunks]);
                np[pairs * chunks..].copy_from_slice(&p[last * chunks..(last + 1) * chunks]);
            }
            g = ng;
            p = np;
            nodes = next;
        }
        g.truncate(chunks);
        g
    };

    let top = &planes[(l - 1) * chunks..];
    Ok((0..n)
        .map(|k| {
            let (c, lane) = (k / l, k % l);
            ((top[c] ^ root[c]) >> lane) & 1 == 1
        })
        .collect())
}

/// Multiplies shared bit `x[i]` into row `i` of `y` (`width` components per
/// row), producing arithmetic shares.
pub fn multi_ba(
    s: &mut Session,
    x: &[bool],
    y: &[RingElement],
    width: usize,
) -> Result<Vec<RingElement>> {
    check_len("multi_ba operands", x.len() * width, y.len())?;
    if y.is_empty() {
        return Ok(Vec::new());
    }
    match s.mode() {
        MultiBaMode::DaBit => multi_ba_dabit(s, x, y, width),
        MultiBaMode::TwoMessage => multi_ba_two_message(s, x, y, width),
    }
}

/// Opens `c = x ^ r` (with `r` from a daBit) in the same flight as the
/// Beaver openings for `z = r * y`; then `x * y = c*y + (1 - 2c) * z`.
fn multi_ba_dabit(
    s: &mut Session,
    x: &[bool],
    y: &[RingElement],
    width: usize,
) -> Result<Vec<RingElement>> {
    let ring = s.ring();
    let lanes = ring.bits() as usize;
    let n = x.len();
    let total = y.len();
    let db = s.randomness().dabits(n)?;
    let t = s.randomness().arith_triples(total)?;
    let c_own: Vec<bool> = x.iter().zip(&db.bits).map(|(&a, &r)| a ^ r).collect();
    let c_words = pack_bits(&c_own, lanes);
    let cw = c_words.len();
    let mut msg = Vec::with_capacity(cw + 2 * total);
    msg.extend_from_slice(&c_words);
    msg.extend((0..total).map(|k| ring.sub(db.arith[k / width], t.u[k])));
    msg.extend((0..total).map(|k| ring.sub(y[k], t.v[k])));
    let peer = s.exchange(Label::MultiBaDaBit, msg.clone())?;
    let c_open: Vec<u64> = (0..cw).map(|i| msg[i] ^ peer[i]).collect();
    let c = unpack_bits(&c_open, lanes, n);
    let party = s.party();
    let (eo, fo) = (cw, cw + total);
    Ok((0..total)
        .map(|k| {
            let e = ring.add(msg[eo + k], peer[eo + k]);
            let f = ring.add(msg[fo + k], peer[fo + k]);
            let z = beaver::combine(ring, party, e, f, t.u[k], t.v[k], t.w[k]);
            if c[k / width] {
                ring.sub(y[k], z)
            } else {
                z
            }
        })
        .collect())
}

fn multi_ba_two_message(
    s: &mut Session,
    x: &[bool],
    y: &[RingElement],
    width: usize,
) -> Result<Vec<RingElement>> {
    let ring = s.ring();
    let total = y.len();
    let r: Vec<u64> = {
        let rng = s.rng();
        (0..total).map(|_| ring.reduce(rng.gen())).collect()
    };
    let mut msg = Vec::with_capacity(2 * total);
    for mu in [false, true] {
        msg.extend((0..total).map(|k| {
            let sel = mu ^ x[k / width];
            ring.sub(if sel { y[k] } else { 0 }, r[k])
        }));
    }
    let peer = s.exchange(Label::MultiBaTwoMessage, msg)?;
    Ok((0..total)
        .map(|k| {
            let pick = if x[k / width] { total + k } else { k };
            ring.add(r[k], peer[pick])
        })
        .collect())
}

/// `u` where `phi = 1`, `v` where `phi = 0`, computed as `v + phi * (u - v)`
/// with a single [`multi_ba`].
pub fn obliv_select(
    s: &mut Session,
    phi: &[bool],
    u: &[RingElement],
    v: &[RingElement],
    width: usize,
) -> Result<Vec<RingElement>> {
    check_len("select branches", u.len(), v.len())?;
    let ring = s.ring();
    let diff: Vec<u64> = u.iter().zip(v).map(|(&a, &b)| ring.sub(a, b)).collect();
    let delta = multi_ba(s, phi, &diff, width)?;
    Ok(v.iter().zip(&delta).map(|(&a, &d)| ring.add(a, d)).collect())
}

/// Oblivious minimum over `keys` with the aligned `width`-wide `payload` row.
///
/// Pairwise tree: the right element replaces the left only when strictly
/// smaller, so the lowest index wins among equal keys.
pub fn obliv_min_with_payload(
    s: &mut Session,
    keys: &[RingElement],
    payload: &[RingElement],
    width: usize,
) -> Result<(RingElement, Vec<RingElement>)> {
    let n = keys.len();
    if n == 0 {
        return Err(Error::Empty("oblivious minimum over zero keys"));
    }
    check_len("payload rows", n * width, payload.len())?;
    let ring = s.ring();
    let w = width + 1;
    let mut rows = Vec::with_capacity(n * w);
    for i in 0..n {
        rows.push(keys[i]);
        rows.extend_from_slice(&payload[i * width..(i + 1) * width]);
    }
    let mut nodes = n;
    while nodes > 1 {
        let pairs = nodes / 2;
        let left_keys: Vec<u64> = (0..pairs).map(|j| rows[2 * j * w]).collect();
        let right_keys: Vec<u64> = (0..pairs).map(|j| rows[(2 * j + 1) * w]).collect();
        let phi = sec_ext(s, &right_keys, &left_keys)?;
        let mut diff = Vec::with_capacity(pairs * w);
        for j in 0..pairs {
            let (l0, r0) = (2 * j * w, (2 * j + 1) * w);
            diff.extend((0..w).map(|c| ring.sub(rows[r0 + c], rows[l0 + c])));
        }
        let delta = multi_ba(s, &phi, &diff, w)?;
        let next = pairs + nodes % 2;
        let mut merged = Vec::with_capacity(next * w);
        for j in 0..pairs {
            let l0 = 2 * j * w;
            merged.extend((0..w).map(|c| ring.add(rows[l0 + c], delta[j * w + c])));
        }
        if nodes % 2 == 1 {
            merged.extend_from_slice(&rows[(nodes - 1) * w..nodes * w]);
        }
        rows = merged;
        nodes = next;
    }
    Ok((rows[0], rows[1..].to_vec()))
}

/// Local XOR of two shared bit vectors.
pub fn xor_bits(x: &[bool], y: &[bool]) -> Vec<bool> {
    x.iter().zip(y).map(|(&a, &b)| a ^ b).collect()
}

/// Shares of the public bit `b`.
pub fn public_bit(party: PartyId, b: bool) -> bool {
    b && party.is_first()
}
