//! Per-party protocol session: channel, randomness, meters and transcript.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::correlated::CorrelationSource;
use crate::error::{Error, Result};
use crate::gadgets::MultiBaMode;
use crate::ring::{Ring, RingElement};
use crate::runtime::channel::Channel;
use crate::runtime::frame::FrameKind;
use crate::sharing::PartyId;

/// Protocol step a round is attributed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Setup,
    Map,
    Fetch,
    Stop,
    Filter,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Setup,
        Phase::Map,
        Phase::Fetch,
        Phase::Stop,
        Phase::Filter,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

/// What a received payload is. Everything except [`Label::Reveal`] is a
/// one-time-padded opening (Beaver `e`/`f`, daBit `c`) or a masked
/// MultiBA message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    AndOpen,
    MulOpen,
    MultiBaDaBit,
    MultiBaTwoMessage,
    Reveal,
}

impl Label {
    pub fn is_masked(self) -> bool {
        self != Label::Reveal
    }
}

/// Exact counters of one party's session.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Meter {
    pub rounds: u64,
    pub bytes_tx: u64,
    pub bytes_rx: u64,
    pub secext: u64,
    pub revealed_bits: u64,
    pub(crate) phase_rounds: [u64; 5],
    pub(crate) phase_secext: [u64; 5],
}

impl Meter {
    pub fn phase_rounds(&self, phase: Phase) -> u64 {
        self.phase_rounds[phase.index()]
    }

    pub fn phase_secext(&self, phase: Phase) -> u64 {
        self.phase_secext[phase.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub label: Label,
    pub phase: Phase,
    pub words: usize,
}

/// Log of every flight received, plus a digest over the received words.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
    hasher: DigestHasher,
}

/// Word-at-a-time multiply-xor fold. Not collision resistant; it only
/// compares runs of the same build.
#[derive(Clone)]
struct DigestHasher(u64);

impl Default for DigestHasher {
    fn default() -> Self {
        DigestHasher(0xcbf2_9ce4_8422_2325)
    }
}

impl DigestHasher {
    const K: u64 = 0x9e37_79b9_7f4a_7c15;

    fn write(&mut self, w: u64) {
        self.0 = (self.0.rotate_left(23) ^ w).wrapping_mul(Self::K);
    }

    fn finish(&self) -> u64 {
        let h = self.0 ^ (self.0 >> 32);
        h.wrapping_mul(Self::K) ^ (h >> 29)
    }
}

impl fmt::Debug for DigestHasher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.finish())
    }
}

impl Transcript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn digest(&self) -> u64 {
        self.hasher.finish()
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    fn record(&mut self, label: Label, phase: Phase, words: &[RingElement]) {
        self.entries.push(TranscriptEntry {
            label,
            phase,
            words: words.len(),
        });
        self.hasher.write(label as u64);
        self.hasher.write(words.len() as u64);
        for &w in words {
            self.hasher.write(w);
        }
    }
}

pub struct Session {
    party: PartyId,
    ring: Ring,
    mode: MultiBaMode,
    channel: Box<dyn Channel>,
    randomness: Box<dyn CorrelationSource>,
    rng: ChaCha12Rng,
    phase: Phase,
    meter: Meter,
    transcript: Transcript,
}

impl Session {
    /// `seed` drives only party-local randomness (the two-message MultiBA
    /// masks); correlated randomness comes from `randomness`.
    pub fn new(
        party: PartyId,
        ring: Ring,
        mode: MultiBaMode,
        channel: Box<dyn Channel>,
        randomness: Box<dyn CorrelationSource>,
        seed: u64,
    ) -> Self {
        Session {
            party,
            ring,
            mode,
            channel,
            randomness,
            rng: ChaCha12Rng::seed_from_u64(seed ^ (party.as_u8() as u64).rotate_left(32)),
            phase: Phase::Setup,
            meter: Meter::default(),
            transcript: Transcript::default(),
        }
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }

    pub fn mode(&self) -> MultiBaMode {
        self.mode
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn meter(&self) -> &Meter {
        &self.meter
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn randomness(&mut self) -> &mut dyn CorrelationSource {
        self.randomness.as_mut()
    }

    pub fn vmax_share(&self) -> RingElement {
        self.randomness.vmax_share()
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }

    pub(crate) fn count_revealed(&mut self, bits: usize) {
        self.meter.revealed_bits += bits as u64;
    }

    pub(crate) fn count_secext(&mut self, n: usize) {
        self.meter.secext += n as u64;
        self.meter.phase_secext[self.phase.index()] += n as u64;
    }

    /// One round: send `words`, receive the peer's flight of equal length.
    pub fn exchange(&mut self, label: Label, words: Vec<RingElement>) -> Result<Vec<RingElement>> {
        let kind = if label == Label::Reveal {
            FrameKind::OpenBit
        } else {
            FrameKind::RoundData
        };
        let len = words.len();
        self.channel.send(kind, words)?;
        let (got_kind, got) = self.channel.recv()?;
        if got_kind != kind || got.len() != len {
            return Err(Error::Protocol(format!(
                "{}: expected {kind:?} with {len} words, peer sent {got_kind:?} with {}",
                self.party,
                got.len()
            )));
        }
        let bytes = (len * self.ring.byte_width()) as u64;
        self.meter.rounds += 1;
        self.meter.phase_rounds[self.phase.index()] += 1;
        self.meter.bytes_tx += bytes;
        self.meter.bytes_rx += bytes;
        self.transcript.record(label, self.phase, &got);
        Ok(got)
    }

    pub fn into_parts(self) -> (Meter, Transcript) {
        (self.meter, self.transcript)
    }
}
