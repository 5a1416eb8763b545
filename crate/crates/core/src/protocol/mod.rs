//! Secure skyline protocol over a shared database.
//!
//! Each function here is run by both servers on their own shares. The query
//! loop maps the database to distances from the query, then repeatedly
//! fetches the tuple with the smallest distance sum, opens a single stop bit,
//! and filters out the fetched tuple together with every tuple it dominates
//! by obliviously overwriting their sums with the sentinel `vMAX`.

pub mod cost;

use crate::error::{Error, Result};
use crate::gadgets::{and_bits, multi_ba, obliv_min_with_payload, obliv_select, reveal_bits, sec_ext, xor_bits};
use crate::ring::{Ring, RingElement};
use crate::runtime::session::{Phase, Session};
use crate::sharing::{check_len, not_bin, not_bits, PartyId};

/// Default sentinel: `2^(l-2)`, the largest value keeping every comparison
/// operand difference inside the signed range.
pub fn default_vmax(ring: Ring) -> RingElement {
    1u64 << ring.bits().saturating_sub(2)
}

/// Sentinel `2^exp`; `exp` may be at most `l - 2`.
pub fn vmax_from_exp(ring: Ring, exp: u32) -> Result<RingElement> {
    if ring.bits() < 3 || exp > ring.bits() - 2 {
        return Err(Error::InvalidArgument(format!(
            "vMAX exponent {exp} exceeds l - 2 for l = {}",
            ring.bits()
        )));
    }
    Ok(1u64 << exp)
}

/// One server's share of an `n x m` database, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedDatabase {
    pub ring: Ring,
    pub party: PartyId,
    pub n: usize,
    pub m: usize,
    pub scale: u32,
    pub values: Vec<RingElement>,
}

impl SharedDatabase {
    pub fn new(
        ring: Ring,
        party: PartyId,
        n: usize,
        m: usize,
        scale: u32,
        values: Vec<RingElement>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Empty("shared database"));
        }
        check_len("database shares", n * m, values.len())?;
        Ok(SharedDatabase {
            ring,
            party,
            n,
            m,
            scale,
            values,
        })
    }

    pub fn row(&self, i: usize) -> &[RingElement] {
        &self.values[i * self.m..(i + 1) * self.m]
    }
}

/// Shares of `|p_i[j] - q[j]|` for every cell, row-major.
///
/// With `d = p - q` and `b = [p < q]`: `|d| = d + b * (-2d)`.
pub fn sec_map(s: &mut Session, db: &SharedDatabase, q: &[RingElement]) -> Result<Vec<RingElement>> {
    check_len("query dimension", db.m, q.len())?;
    let ring = s.ring();
    let qs: Vec<u64> = (0..db.n).flat_map(|_| q.iter().copied()).collect();
    let below = sec_ext(s, &db.values, &qs)?;
    let d: Vec<u64> = db.values.iter().zip(&qs).map(|(&p, &q)| ring.sub(p, q)).collect();
    let minus_2d: Vec<u64> = d.iter().map(|&x| ring.mul(ring.neg(x), 2)).collect();
    let delta = multi_ba(s, &below, &minus_2d, 1)?;
    Ok(d.iter().zip(&delta).map(|(&x, &y)| ring.add(x, y)).collect())
}

/// Row sums of the mapped database. Local only.
pub fn attribute_sums(ring: Ring, t: &[RingElement], m: usize) -> Vec<RingElement> {
    t.chunks(m)
        .map(|row| row.iter().fold(0, |acc, &x| ring.add(acc, x)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fetched {
    pub s_min: RingElement,
    pub t_star: Vec<RingElement>,
    pub p_star: Vec<RingElement>,
}

/// First tuple attaining the minimum sum, with its mapped and original rows.
pub fn sec_fetch(
    s: &mut Session,
    sums: &[RingElement],
    t: &[RingElement],
    p: &[RingElement],
    m: usize,
) -> Result<Fetched> {
    let n = sums.len();
    check_len("mapped rows", n * m, t.len())?;
    check_len("original rows", n * m, p.len())?;
    let mut payload = Vec::with_capacity(n * 2 * m);
    for i in 0..n {
        payload.extend_from_slice(&t[i * m..(i + 1) * m]);
        payload.extend_from_slice(&p[i * m..(i + 1) * m]);
    }
    let (s_min, row) = obliv_min_with_payload(s, sums, &payload, 2 * m)?;
    Ok(Fetched {
        s_min,
        t_star: row[..m].to_vec(),
        p_star: row[m..].to_vec(),
    })
}

/// Per-tuple shared flags of one filtering round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterFlags {
    /// `s_i <= sMin`: the tuple attains the minimum.
    pub sigma: Vec<bool>,
    /// First tuple attaining the minimum (the one just fetched).
    pub is_first: Vec<bool>,
    /// Tuples with `t* <= t_i` componentwise and a larger sum.
    pub is_domi: Vec<bool>,
    pub phi: Vec<bool>,
}

/// Computes the filter flags.
///
/// `is_first_i = sigma_i & !(sigma_0 | ... | sigma_{i-1})`; the exclusive
/// prefix OR runs as a log-depth scan whose levels share rounds with the
/// AND tree over the `m` per-attribute comparisons.
pub fn sec_filt_flags(
    s: &mut Session,
    t: &[RingElement],
    t_star: &[RingElement],
    s_min: RingElement,
    sums: &[RingElement],
) -> Result<FilterFlags> {
    let n = sums.len();
    let m = t_star.len();
    if n == 0 || m == 0 {
        return Err(Error::Empty("filter input"));
    }
    check_len("mapped rows", n * m, t.len())?;
    let party = s.party();

    let mut a = vec![s_min; n];
    a.extend_from_slice(t);
    let mut b = sums.to_vec();
    for _ in 0..n {
        b.extend_from_slice(t_star);
    }
    let cmp = sec_ext(s, &a, &b)?;
    let sigma = not_bits(party, &cmp[..n]);
    let mut vals = not_bits(party, &cmp[n..]);

    let span = n - 1;
    let mut prefix = sigma[..span].to_vec();
    let mut dist = 1;
    let mut width = m;
    while dist < span || width > 1 {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let scan = if dist < span { span - dist } else { 0 };
        for i in dist..dist + scan {
            x.push(prefix[i]);
            y.push(prefix[i - dist]);
        }
        let pairs = width / 2;
        for i in 0..n {
            for j in 0..pairs {
                x.push(vals[i * width + 2 * j]);
                y.push(vals[i * width + 2 * j + 1]);
            }
        }
        let z = and_bits(s, &x, &y)?;
        if scan > 0 {
            let mut next = prefix.clone();
            for i in dist..span {
                let k = i - dist;
                next[i] = prefix[i] ^ prefix[i - dist] ^ z[k];
            }
            prefix = next;
        }
        if pairs > 0 {
            let next_width = pairs + width % 2;
            let mut next = Vec::with_capacity(n * next_width);
            for i in 0..n {
                next.extend_from_slice(&z[scan + i * pairs..scan + (i + 1) * pairs]);
                if width % 2 == 1 {
                    next.push(vals[i * width + width - 1]);
                }
            }
            vals = next;
            width = next_width;
        }
        dist *= 2;
    }

    let mut x = sigma.clone();
    x.extend_from_slice(&vals);
    let mut y: Vec<bool> = (0..n)
        .map(|i| not_bin(party, if i == 0 { false } else { prefix[i - 1] }))
        .collect();
    y.extend(not_bits(party, &sigma));
    let z = and_bits(s, &x, &y)?;
    let is_first = z[..n].to_vec();
    let is_domi = z[n..].to_vec();
    let phi = xor_bits(&is_first, &is_domi);
    Ok(FilterFlags {
        sigma,
        is_first,
        is_domi,
        phi,
    })
}

/// The flag chain as a strictly sequential loop, one AND round per tuple.
/// Reference for [`sec_filt_flags`]'s prefix form.
pub fn first_marks_sequential(s: &mut Session, sigma: &[bool]) -> Result<Vec<bool>> {
    let party = s.party();
    let mut flag = false;
    let mut out = Vec::with_capacity(sigma.len());
    for &sg in sigma {
        let first = and_bits(s, &[sg], &[not_bin(party, flag)])?[0];
        flag ^= first;
        out.push(first);
    }
    Ok(out)
}

/// One filtering round: sums of the fetched tuple and of every tuple it
/// dominates become `vMAX`.
pub fn sec_filt(
    s: &mut Session,
    t: &[RingElement],
    t_star: &[RingElement],
    s_min: RingElement,
    sums: &[RingElement],
) -> Result<Vec<RingElement>> {
    let flags = sec_filt_flags(s, t, t_star, s_min, sums)?;
    let vmax = vec![s.vmax_share(); sums.len()];
    obliv_select(s, &flags.phi, &vmax, sums, 1)
}

/// A party's view of a finished query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryOutput {
    /// Shares of the skyline tuples in fetch order.
    pub pool: Vec<Vec<RingElement>>,
    /// Fetch/stop iterations, `k + 1`.
    pub loops: usize,
}

impl QueryOutput {
    pub fn k(&self) -> usize {
        self.pool.len()
    }
}

/// Full skyline query. The stop bit is the only value ever opened.
pub fn run_query(s: &mut Session, db: &SharedDatabase, q: &[RingElement]) -> Result<QueryOutput> {
    if db.ring != s.ring() {
        return Err(Error::WidthMismatch {
            expected: s.ring().bits(),
            found: db.ring.bits(),
        });
    }
    check_len("query dimension", db.m, q.len())?;
    s.set_phase(Phase::Map);
    let t = sec_map(s, db, q)?;
    let mut sums = attribute_sums(s.ring(), &t, db.m);
    let vmax = s.vmax_share();
    let mut pool = Vec::new();
    let mut loops = 0;
    loop {
        loops += 1;
        if loops > db.n + 1 {
            return Err(Error::Protocol("query loop did not terminate".into()));
        }
        s.set_phase(Phase::Fetch);
        let f = sec_fetch(s, &sums, &t, &db.values, db.m)?;
        s.set_phase(Phase::Stop);
        let below = sec_ext(s, &[f.s_min], &[vmax])?;
        let is_stop = not_bin(s.party(), below[0]);
        if reveal_bits(s, &[is_stop])?[0] {
            break;
        }
        pool.push(f.p_star);
        s.set_phase(Phase::Filter);
        sums = sec_filt(s, &t, &f.t_star, f.s_min, &sums)?;
    }
    s.set_phase(Phase::Setup);
    Ok(QueryOutput { pool, loops })
}

#[cfg(test)]
mod tests;
