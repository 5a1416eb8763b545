//! Length-prefixed wire frames.
//!
//! ```text
//! +----------------+------+------------+-------------------------+
//! | len: u32 BE    | kind | session BE | payload                 |
//! +----------------+------+------------+-------------------------+
//! ```
//!
//! `len` counts every byte after the length field (kind, session id and
//! payload). Word payloads are little-endian `ceil(l/8)`-byte words.

use std::io::{ErrorKind, Read, Write};

use crate::error::{Error, Result};
use crate::ring::{Ring, RingElement};

/// Largest accepted frame body. Guards against allocating on a bogus length.
pub const MAX_FRAME_LEN: usize = 1 << 30;

const HEADER_LEN: usize = 5;

/// Version word exchanged in query and peer-hello frames.
pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameKind {
    ShareUpload = 1,
    Query = 2,
    RoundData = 3,
    OpenBit = 4,
    Result = 5,
}

impl FrameKind {
    pub fn from_u8(b: u8) -> Result<Self> {
        Ok(match b {
            1 => FrameKind::ShareUpload,
            2 => FrameKind::Query,
            3 => FrameKind::RoundData,
            4 => FrameKind::OpenBit,
            5 => FrameKind::Result,
            other => return Err(Error::MalformedFrame(format!("unknown kind {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub session: u32,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameKind, session: u32, payload: Vec<u8>) -> Self {
        Frame {
            kind,
            session,
            payload,
        }
    }

    pub fn words(kind: FrameKind, session: u32, ring: Ring, words: &[RingElement]) -> Self {
        Frame::new(kind, session, encode_words(ring, words))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let body = HEADER_LEN + self.payload.len();
        if body > MAX_FRAME_LEN {
            return Err(Error::MalformedFrame(format!("frame of {body} bytes too large")));
        }
        let mut out = Vec::with_capacity(4 + body);
        out.extend_from_slice(&(body as u32).to_be_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.session.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parses exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::MalformedFrame("truncated length prefix".into()));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        let body = &bytes[4..];
        if len != body.len() {
            return Err(Error::MalformedFrame(format!(
                "length prefix says {len} bytes, found {}",
                body.len()
            )));
        }
        Self::from_body(body)
    }

    fn from_body(body: &[u8]) -> Result<Self> {
        if body.len() < HEADER_LEN {
            return Err(Error::MalformedFrame("frame shorter than its header".into()));
        }
        Ok(Frame {
            kind: FrameKind::from_u8(body[0])?,
            session: u32::from_be_bytes(body[1..5].try_into().unwrap()),
            payload: body[5..].to_vec(),
        })
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(&self.encode()?)?;
        out.flush()?;
        Ok(())
    }

    /// Reads one frame. A clean end of stream before the first byte maps to
    /// [`Error::ChannelClosed`].
    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        let mut len = [0u8; 4];
        if let Err(e) = input.read_exact(&mut len) {
            return Err(match e.kind() {
                ErrorKind::UnexpectedEof => Error::ChannelClosed,
                _ => Error::Io(e),
            });
        }
        let len = u32::from_be_bytes(len) as usize;
        if len > MAX_FRAME_LEN {
            return Err(Error::MalformedFrame(format!("frame of {len} bytes too large")));
        }
        if len < HEADER_LEN {
            return Err(Error::MalformedFrame("frame shorter than its header".into()));
        }
        let mut body = vec![0u8; len];
        input.read_exact(&mut body).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => Error::MalformedFrame("truncated frame body".into()),
            _ => Error::Io(e),
        })?;
        Self::from_body(&body)
    }

    pub fn decode_words(&self, ring: Ring) -> Result<Vec<RingElement>> {
        decode_words(ring, &self.payload)
    }
}

pub fn encode_words(ring: Ring, words: &[RingElement]) -> Vec<u8> {
    let bw = ring.byte_width();
    let mut out = Vec::with_capacity(words.len() * bw);
    for w in words {
        out.extend_from_slice(&w.to_le_bytes()[..bw]);
    }
    out
}

pub fn decode_words(ring: Ring, bytes: &[u8]) -> Result<Vec<RingElement>> {
    let bw = ring.byte_width();
    if bytes.len() % bw != 0 {
        return Err(Error::MalformedFrame(format!(
            "payload of {} bytes is not a whole number of {bw}-byte words",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(bw)
        .map(|c| {
            let mut b = [0u8; 8];
            b[..bw].copy_from_slice(c);
            let w = u64::from_le_bytes(b);
            if w & !ring.mask() != 0 {
                return Err(Error::MalformedFrame(format!(
                    "word exceeds {} bits",
                    ring.bits()
                )));
            }
            Ok(w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let r = Ring::new(16).unwrap();
        let f = Frame::words(FrameKind::OpenBit, 0x0102_0304, r, &[0xBEEF, 1]);
        let bytes = f.encode().unwrap();
        assert_eq!(
            bytes,
            vec![0, 0, 0, 9, 4, 1, 2, 3, 4, 0xEF, 0xBE, 0x01, 0x00]
        );
        assert_eq!(Frame::decode(&bytes).unwrap(), f);
        assert_eq!(f.decode_words(r).unwrap(), vec![0xBEEF, 1]);
    }

    #[test]
    fn rejects_unknown_kind_and_short_header() {
        assert!(Frame::decode(&[0, 0, 0, 5, 9, 0, 0, 0, 0]).is_err());
        assert!(Frame::decode(&[0, 0, 0, 2, 1, 0]).is_err());
        let mut cur = &[0u8, 0, 0, 1, 1][..];
        assert!(matches!(
            Frame::read_from(&mut cur),
            Err(Error::MalformedFrame(_))
        ));
    }

    #[test]
    fn oversized_length_rejected_before_allocation() {
        let mut bytes = vec![0xFF, 0xFF, 0xFF, 0xFF];
        bytes.extend_from_slice(&[1, 0, 0, 0, 0]);
        assert!(matches!(
            Frame::read_from(&mut &bytes[..]),
            Err(Error::MalformedFrame(_))
        ));
    }

    #[test]
    fn clean_eof_is_channel_closed() {
        assert!(matches!(
            Frame::read_from(&mut &[][..]),
            Err(Error::ChannelClosed)
        ));
    }

    #[test]
    fn words_above_width_rejected() {
        let r = Ring::new(4).unwrap();
        assert!(decode_words(r, &[0x1F]).is_err());
        assert_eq!(decode_words(r, &[0x0F]).unwrap(), vec![15]);
        assert!(decode_words(Ring::new(16).unwrap(), &[1, 2, 3]).is_err());
    }

    proptest! {
        #[test]
        fn stream_round_trip(
            frames in proptest::collection::vec(
                (1u8..=5, any::<u32>(), proptest::collection::vec(any::<u8>(), 0..64)),
                1..8,
            )
        ) {
            let frames: Vec<Frame> = frames
                .into_iter()
                .map(|(k, s, p)| Frame::new(FrameKind::from_u8(k).unwrap(), s, p))
                .collect();
            let mut buf = Vec::new();
            for f in &frames {
                f.write_to(&mut buf).unwrap();
            }
            let mut cur = &buf[..];
            for f in &frames {
                prop_assert_eq!(&Frame::read_from(&mut cur).unwrap(), f);
            }
            prop_assert!(matches!(Frame::read_from(&mut cur), Err(Error::ChannelClosed)));
        }

        #[test]
        fn truncation_never_parses(
            payload in proptest::collection::vec(any::<u8>(), 0..64),
            cut in 1usize..70,
        ) {
            let bytes = Frame::new(FrameKind::RoundData, 7, payload).encode().unwrap();
            let cut = cut.min(bytes.len() - 1);
            let short = &bytes[..bytes.len() - cut];
            prop_assert!(Frame::decode(short).is_err());
            prop_assert!(Frame::read_from(&mut &short[..]).is_err());
        }

        #[test]
        fn word_round_trip(words in proptest::collection::vec(any::<u64>(), 0..32), bits in 1u32..=64) {
            let r = Ring::new(bits).unwrap();
            let words: Vec<u64> = words.into_iter().map(|w| r.reduce(w)).collect();
            prop_assert_eq!(decode_words(r, &encode_words(r, &words)).unwrap(), words);
        }
    }
}
