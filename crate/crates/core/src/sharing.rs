//! Two-party additive (mod `2^l`) and XOR sharing.
//!
//! A party's view of a shared vector is simply its own share vector; the
//! functions here are the local, communication-free half of every operation.
//! The interactive half (opening masked values) lives in [`crate::gadgets`].

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ring::{Ring, RingElement};

/// One of the two computing servers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartyId {
    First,
    Second,
}

impl PartyId {
    pub fn from_u8(id: u8) -> Result<Self> {
        match id {
            1 => Ok(PartyId::First),
            2 => Ok(PartyId::Second),
            other => Err(Error::InvalidParty(other)),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            PartyId::First => 1,
            PartyId::Second => 2,
        }
    }

    pub fn index(self) -> usize {
        self.as_u8() as usize - 1
    }

    pub fn other(self) -> Self {
        match self {
            PartyId::First => PartyId::Second,
            PartyId::Second => PartyId::First,
        }
    }

    pub fn is_first(self) -> bool {
        self == PartyId::First
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.as_u8())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArithShare {
    pub party: PartyId,
    pub value: RingElement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinShare {
    pub party: PartyId,
    pub bit: bool,
}

pub fn share_arith<R: Rng + ?Sized>(
    ring: Ring,
    x: RingElement,
    rng: &mut R,
) -> (ArithShare, ArithShare) {
    let first = ring.random(rng);
    (
        ArithShare {
            party: PartyId::First,
            value: first,
        },
        ArithShare {
            party: PartyId::Second,
            value: ring.sub(x, first),
        },
    )
}

pub fn reconstruct_arith(ring: Ring, a: ArithShare, b: ArithShare) -> Result<RingElement> {
    if a.party == b.party {
        return Err(Error::PartyCollision(a.party.as_u8()));
    }
    Ok(ring.add(a.value, b.value))
}

pub fn share_bin<R: Rng + ?Sized>(x: bool, rng: &mut R) -> (BinShare, BinShare) {
    let first: bool = rng.gen();
    (
        BinShare {
            party: PartyId::First,
            bit: first,
        },
        BinShare {
            party: PartyId::Second,
            bit: x ^ first,
        },
    )
}

pub fn reconstruct_bin(a: BinShare, b: BinShare) -> Result<bool> {
    if a.party == b.party {
        return Err(Error::PartyCollision(a.party.as_u8()));
    }
    Ok(a.bit ^ b.bit)
}

/// Shares every element of `xs`; returns the two parties' share vectors.
pub fn share_vec<R: Rng + ?Sized>(
    ring: Ring,
    xs: &[RingElement],
    rng: &mut R,
) -> (Vec<RingElement>, Vec<RingElement>) {
    let first: Vec<u64> = xs.iter().map(|_| ring.random(rng)).collect();
    let second = xs
        .iter()
        .zip(&first)
        .map(|(&x, &r)| ring.sub(x, r))
        .collect();
    (first, second)
}

pub fn reconstruct_vec(ring: Ring, a: &[RingElement], b: &[RingElement]) -> Result<Vec<RingElement>> {
    check_len("reconstruct", a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(&x, &y)| ring.add(x, y)).collect())
}

pub fn share_bits<R: Rng + ?Sized>(xs: &[bool], rng: &mut R) -> (Vec<bool>, Vec<bool>) {
    let first: Vec<bool> = xs.iter().map(|_| rng.gen()).collect();
    let second = xs.iter().zip(&first).map(|(&x, &r)| x ^ r).collect();
    (first, second)
}

pub fn reconstruct_bits(a: &[bool], b: &[bool]) -> Result<Vec<bool>> {
    check_len("reconstruct bits", a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(&x, &y)| x ^ y).collect())
}

pub(crate) fn check_len(what: &'static str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { what, left, right });
    }
    Ok(())
}

// Local linear operations on a party's own share vectors.

pub fn add(ring: Ring, x: &[RingElement], y: &[RingElement]) -> Result<Vec<RingElement>> {
    check_len("add", x.len(), y.len())?;
    Ok(x.iter().zip(y).map(|(&a, &b)| ring.add(a, b)).collect())
}

pub fn sub(ring: Ring, x: &[RingElement], y: &[RingElement]) -> Result<Vec<RingElement>> {
    check_len("sub", x.len(), y.len())?;
    Ok(x.iter().zip(y).map(|(&a, &b)| ring.sub(a, b)).collect())
}

pub fn scale(ring: Ring, eta: RingElement, x: &[RingElement]) -> Vec<RingElement> {
    x.iter().map(|&a| ring.mul(eta, a)).collect()
}

/// Adds a public constant: only the first party shifts its share.
pub fn add_public(ring: Ring, party: PartyId, x: RingElement, c: RingElement) -> RingElement {
    if party.is_first() {
        ring.add(x, c)
    } else {
        x
    }
}

/// This party's share of the public constant `c`.
pub fn public_share(party: PartyId, c: RingElement) -> RingElement {
    if party.is_first() {
        c
    } else {
        0
    }
}

/// Secret-shared NOT: the first party flips its share.
#[inline]
pub fn not_bin(party: PartyId, x: bool) -> bool {
    x ^ party.is_first()
}

pub fn not_bits(party: PartyId, xs: &[bool]) -> Vec<bool> {
    xs.iter().map(|&x| not_bin(party, x)).collect()
}

/// Beaver multiplication, local steps.
///
/// `mask` produces the party's shares of `e = x - u` and `f = y - v`;
/// after both openings are exchanged, `combine` yields the share of `x * y`.
pub mod beaver {
    use super::PartyId;
    use crate::ring::{Ring, RingElement};

    #[inline]
    pub fn mask(
        ring: Ring,
        x: RingElement,
        y: RingElement,
        u: RingElement,
        v: RingElement,
    ) -> (RingElement, RingElement) {
        (ring.sub(x, u), ring.sub(y, v))
    }

    #[inline]
    pub fn combine(
        ring: Ring,
        party: PartyId,
        e: RingElement,
        f: RingElement,
        u: RingElement,
        v: RingElement,
        w: RingElement,
    ) -> RingElement {
        let mut z = ring.add(ring.add(ring.mul(f, u), ring.mul(e, v)), w);
        if party.is_first() {
            z = ring.add(z, ring.mul(e, f));
        }
        z
    }

    /// XOR-sharing analogue on packed words: every bit lane is an
    /// independent AND gate.
    #[inline]
    pub fn mask_bin(x: u64, y: u64, u: u64, v: u64) -> (u64, u64) {
        (x ^ u, y ^ v)
    }

    #[inline]
    pub fn combine_bin(party: PartyId, e: u64, f: u64, u: u64, v: u64, w: u64) -> u64 {
        let mut z = (f & u) ^ (e & v) ^ w;
        if party.is_first() {
            z ^= e & f;
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn share_example_at_width_8() {
        let r = Ring::new(8).unwrap();
        // first share fixed at 200: second is 5 - 200 mod 256
        let second = r.sub(5, 200);
        assert_eq!(second, 61);
        let a = ArithShare {
            party: PartyId::First,
            value: 200,
        };
        let b = ArithShare {
            party: PartyId::Second,
            value: second,
        };
        assert_eq!(reconstruct_arith(r, a, b).unwrap(), 5);
    }

    #[test]
    fn zero_shares_are_inverses() {
        let r = Ring::default();
        let mut rng = StdRng::seed_from_u64(3);
        let (a, b) = share_arith(r, 0, &mut rng);
        assert_eq!(r.add(a.value, b.value), 0);
        assert_eq!(a.value, r.neg(b.value));
    }

    #[test]
    fn reconstruct_rejects_same_party() {
        let r = Ring::default();
        let a = ArithShare {
            party: PartyId::First,
            value: 1,
        };
        assert!(matches!(
            reconstruct_arith(r, a, a),
            Err(Error::PartyCollision(1))
        ));
        let b = BinShare {
            party: PartyId::Second,
            bit: true,
        };
        assert!(reconstruct_bin(b, b).is_err());
    }

    #[test]
    fn round_trip_exhaustive_width_8() {
        let r = Ring::new(8).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        for x in 0..256u64 {
            let (a, b) = share_arith(r, x, &mut rng);
            assert_eq!(reconstruct_arith(r, a, b).unwrap(), x);
        }
        for x in [false, true] {
            let (a, b) = share_bin(x, &mut rng);
            assert_eq!(reconstruct_bin(a, b).unwrap(), x);
        }
    }

    #[test]
    fn local_linear_examples() {
        let r = Ring::default();
        let mut rng = StdRng::seed_from_u64(4);
        let (x1, x2) = share_vec(r, &[7, 40], &mut rng);
        let (z1, z2) = share_vec(r, &[0, 0], &mut rng);
        let s1 = add(r, &x1, &z1).unwrap();
        let s2 = add(r, &x2, &z2).unwrap();
        assert_eq!(reconstruct_vec(r, &s1, &s2).unwrap(), vec![7, 40]);
        let t1 = scale(r, 3, &x1);
        let t2 = scale(r, 3, &x2);
        assert_eq!(reconstruct_vec(r, &t1, &t2).unwrap(), vec![21, 120]);
        let d1 = sub(r, &x1, &x1).unwrap();
        let d2 = sub(r, &x2, &x2).unwrap();
        assert_eq!(reconstruct_vec(r, &d1, &d2).unwrap(), vec![0, 0]);
        assert!(add(r, &x1, &[1]).is_err());
    }

    #[test]
    fn public_constants_and_not() {
        let r = Ring::default();
        let mut rng = StdRng::seed_from_u64(5);
        let (a, b) = share_arith(r, 10, &mut rng);
        let a2 = add_public(r, PartyId::First, a.value, 5);
        let b2 = add_public(r, PartyId::Second, b.value, 5);
        assert_eq!(r.add(a2, b2), 15);
        assert_eq!(
            r.add(public_share(PartyId::First, 9), public_share(PartyId::Second, 9)),
            9
        );
        for x in [false, true] {
            let (s1, s2) = share_bin(x, &mut rng);
            let n1 = not_bin(PartyId::First, s1.bit);
            let n2 = not_bin(PartyId::Second, s2.bit);
            assert_eq!(n1 ^ n2, !x);
            assert_eq!(n2, s2.bit);
            assert_eq!(not_bin(PartyId::First, n1) ^ not_bin(PartyId::Second, n2), x);
        }
    }

    #[test]
    fn first_share_is_uniform_at_width_4() {
        // The dealer's randomness is the first share itself; enumerate it and
        // count how often each first-share value appears for every secret.
        let r = Ring::new(4).unwrap();
        for x in 0..16u64 {
            let mut counts = [0u32; 16];
            for first in 0..16u64 {
                let second = r.sub(x, first);
                assert_eq!(r.add(first, second), x);
                counts[first as usize] += 1;
            }
            assert!(counts.iter().all(|&c| c == 1));
            // and the second share is a bijection of the first one
            let mut seen = [false; 16];
            for first in 0..16u64 {
                seen[r.sub(x, first) as usize] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn beaver_local_steps_multiply() {
        let r = Ring::new(8).unwrap();
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..256 {
            let (x, y) = (12u64, 9u64);
            let (u, v) = (r.random(&mut rng), r.random(&mut rng));
            let w = r.mul(u, v);
            let (x1, x2) = share_arith(r, x, &mut rng);
            let (y1, y2) = share_arith(r, y, &mut rng);
            let (u1, u2) = share_arith(r, u, &mut rng);
            let (v1, v2) = share_arith(r, v, &mut rng);
            let (w1, w2) = share_arith(r, w, &mut rng);
            let (e1, f1) = beaver::mask(r, x1.value, y1.value, u1.value, v1.value);
            let (e2, f2) = beaver::mask(r, x2.value, y2.value, u2.value, v2.value);
            let (e, f) = (r.add(e1, e2), r.add(f1, f2));
            let z1 = beaver::combine(r, PartyId::First, e, f, u1.value, v1.value, w1.value);
            let z2 = beaver::combine(r, PartyId::Second, e, f, u2.value, v2.value, w2.value);
            assert_eq!(r.add(z1, z2), 108);
        }
    }
}
