//! Fixed-width ring `Z_{2^l}` with two's-complement signed interpretation.
//!
//! Elements are carried as `u64` words whose bits above `l` are always zero.
//! The [`Ring`] value carries the width and performs every reduction, so the
//! same code paths serve the production width (64) and the narrow widths used
//! for exhaustive testing (4, 8).

use rand::Rng;

use crate::error::{Error, Result};

/// A value of the ring. Only the low `l` bits are meaningful.
pub type RingElement = u64;

/// Ring `Z_{2^l}` for a session-wide width `l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Ring {
    bits: u32,
    mask: u64,
}

impl Ring {
    /// Width used by production sessions.
    pub const DEFAULT_BITS: u32 = 64;

    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > 64 {
            return Err(Error::UnsupportedWidth(bits));
        }
        let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
        Ok(Ring { bits, mask })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    /// Bytes used to encode one element on the wire and in files.
    pub fn byte_width(&self) -> usize {
        self.bits.div_ceil(8) as usize
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> RingElement {
        x & self.mask
    }

    #[inline]
    pub fn add(&self, a: RingElement, b: RingElement) -> RingElement {
        a.wrapping_add(b) & self.mask
    }

    #[inline]
    pub fn sub(&self, a: RingElement, b: RingElement) -> RingElement {
        a.wrapping_sub(b) & self.mask
    }

    #[inline]
    pub fn neg(&self, a: RingElement) -> RingElement {
        a.wrapping_neg() & self.mask
    }

    #[inline]
    pub fn mul(&self, a: RingElement, b: RingElement) -> RingElement {
        a.wrapping_mul(b) & self.mask
    }

    /// Bit `l-1`; set exactly when the signed interpretation is negative.
    #[inline]
    pub fn msb(&self, a: RingElement) -> bool {
        (a >> (self.bits - 1)) & 1 == 1
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> RingElement {
        rng.gen::<u64>() & self.mask
    }

    /// Largest value accepted by [`Ring::encode_signed`].
    pub fn max_signed(&self) -> i64 {
        ((1u128 << (self.bits - 1)) - 1) as i64
    }

    /// Two's-complement encoding of `v`; requires `|v| < 2^(l-1)`.
    pub fn encode_signed(&self, v: i64) -> Result<RingElement> {
        let limit = 1i128 << (self.bits - 1);
        let wide = v as i128;
        if wide >= limit || wide <= -limit {
            return Err(Error::OutOfRange {
                value: wide,
                bits: self.bits,
            });
        }
        Ok((v as u64) & self.mask)
    }

    pub fn decode_signed(&self, a: RingElement) -> i64 {
        let a = a & self.mask;
        if self.bits == 64 {
            a as i64
        } else if self.msb(a) {
            (a as i64) - (1i64 << self.bits)
        } else {
            a as i64
        }
    }
}

impl Default for Ring {
    fn default() -> Self {
        Ring::new(Self::DEFAULT_BITS).expect("64 is a valid width")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r8() -> Ring {
        Ring::new(8).unwrap()
    }

    #[test]
    fn wrap_add_examples() {
        let r = r8();
        assert_eq!(r.add(0, 77), 77);
        // 300 mod 256
        assert_eq!(r.add(200, 100), 44);
        assert_eq!(r.add(255, 1), 0);
    }

    #[test]
    fn msb_examples() {
        let r = r8();
        assert!(!r.msb(0));
        assert!(r.msb(128));
        let d = r.sub(3, 5);
        assert_eq!(d, 254);
        assert!(r.msb(d));
    }

    #[test]
    fn signed_round_trip_examples() {
        let r = r8();
        assert_eq!(r.encode_signed(0).unwrap(), 0);
        assert_eq!(r.encode_signed(-2).unwrap(), 254);
        assert_eq!(r.decode_signed(254), -2);
        assert_eq!(r.encode_signed(127).unwrap(), 127);
        assert_eq!(r.decode_signed(127), 127);
        assert!(r.encode_signed(128).is_err());
        assert!(r.encode_signed(-128).is_err());
    }

    #[test]
    fn negation_is_complement() {
        let r = r8();
        for v in 1..128i64 {
            assert_eq!(r.encode_signed(-v).unwrap(), 256 - r.encode_signed(v).unwrap());
        }
    }

    #[test]
    fn rejects_bad_width() {
        assert!(Ring::new(0).is_err());
        assert!(Ring::new(65).is_err());
        assert_eq!(Ring::default().mask(), u64::MAX);
    }

    #[test]
    fn msb_orders_signed_values_exhaustively() {
        let r = r8();
        for u in -127i64..=127 {
            for v in -127i64..=127 {
                if (u - v).abs() >= 128 {
                    continue;
                }
                let d = r.sub(r.encode_signed(u).unwrap(), r.encode_signed(v).unwrap());
                assert_eq!(r.msb(d), u < v, "u={u} v={v}");
            }
        }
    }

    proptest! {
        #[test]
        fn sub_is_add_negation(a: u64, b: u64) {
            let r = Ring::default();
            prop_assert_eq!(r.add(a, r.neg(b)), r.sub(a, b));
            prop_assert_eq!(r.sub(a, a), 0);
        }

        #[test]
        fn mul_distributes(a: u64, b: u64, c: u64, bits in 1u32..=64) {
            let r = Ring::new(bits).unwrap();
            let (a, b, c) = (r.reduce(a), r.reduce(b), r.reduce(c));
            prop_assert_eq!(r.mul(a, r.add(b, c)), r.add(r.mul(a, b), r.mul(a, c)));
        }

        #[test]
        fn signed_round_trip(v in -(1i64 << 62)..(1i64 << 62)) {
            let r = Ring::default();
            prop_assert_eq!(r.decode_signed(r.encode_signed(v).unwrap()), v);
        }
    }
}
