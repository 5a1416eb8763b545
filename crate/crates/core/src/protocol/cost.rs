//! Exact cost of a query as a function of `(l, n, m, k)` and the MultiBA
//! mode, derived from the batch schedule rather than by running anything.

use crate::correlated::RandomnessBudget;
use crate::gadgets::{MultiBaMode, PpaCircuitPlan};
use crate::ring::Ring;

/// `ceil(log2(x))`, with `ceil_log2(0) = ceil_log2(1) = 0`.
pub fn ceil_log2(x: usize) -> u64 {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as u64
    }
}

/// Rounds of one batched comparison: the generate round plus the combine
/// levels of the carry circuit.
pub fn comparison_rounds(l: u32) -> u64 {
    let positions = l as usize - 1;
    (positions > 0) as u64 + ceil_log2(positions)
}

/// Closed-form rounds per step of a query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundForms {
    pub map: u64,
    /// One fetch: `ceil(log2 n)` levels of comparison + MultiBA.
    pub fetch: u64,
    /// Stop test: comparison plus the opening.
    pub stop: u64,
    /// One filter: comparison, merged prefix-OR / AND-tree levels, final
    /// AND, MultiBA.
    pub filter: u64,
}

impl RoundForms {
    pub fn new(l: u32, n: usize, m: usize) -> Self {
        let e = comparison_rounds(l);
        RoundForms {
            map: e + 1,
            fetch: ceil_log2(n) * (e + 1),
            stop: e + 1,
            filter: e + ceil_log2(n.saturating_sub(1)).max(ceil_log2(m)) + 2,
        }
    }

    pub fn total(&self, k: usize) -> u64 {
        let k = k as u64;
        self.map + (k + 1) * (self.fetch + self.stop) + k * self.filter
    }
}

/// `n*m + k*n*(2+m) + n`.
pub fn secext_formula(n: usize, m: usize, k: usize) -> u64 {
    let (n, m, k) = (n as u64, m as u64, k as u64);
    n * m + k * n * (2 + m) + n
}

/// Everything one party spends on a query returning `k` skyline tuples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryCost {
    pub secext: u64,
    pub rounds: u64,
    pub map_rounds: u64,
    pub fetch_rounds: u64,
    pub stop_rounds: u64,
    pub filter_rounds: u64,
    /// Payload bytes sent (equal to bytes received).
    pub bytes: u64,
    pub randomness: RandomnessBudget,
}

#[derive(Clone, Copy, Default)]
struct Tally {
    secext: u64,
    rounds: u64,
    words: u64,
    r: RandomnessBudget,
}

impl Tally {
    fn scaled(&self, f: u64) -> Tally {
        Tally {
            secext: self.secext * f,
            rounds: self.rounds * f,
            words: self.words * f,
            r: self.r.times(f),
        }
    }

    fn add(&mut self, o: &Tally) {
        self.secext += o.secext;
        self.rounds += o.rounds;
        self.words += o.words;
        self.r.arith_triples += o.r.arith_triples;
        self.r.bin_triples += o.r.bin_triples;
        self.r.dabits += o.r.dabits;
    }
}

struct Acc {
    l: usize,
    gates: u64,
    depth: u64,
    mode: MultiBaMode,
    t: Tally,
}

impl Acc {
    fn new(ring: Ring, mode: MultiBaMode) -> Self {
        let plan = PpaCircuitPlan::new(ring.bits());
        Acc {
            l: ring.bits() as usize,
            gates: plan.and_gates() as u64,
            depth: plan.rounds() as u64,
            mode,
            t: Tally::default(),
        }
    }

    fn comparison(&mut self, count: usize) {
        if count == 0 {
            return;
        }
        let chunks = count.div_ceil(self.l) as u64;
        self.t.secext += count as u64;
        self.t.rounds += self.depth;
        self.t.r.bin_triples += self.gates * chunks;
        self.t.words += 2 * self.gates * chunks;
    }

    fn and_bits(&mut self, count: usize) {
        if count == 0 {
            return;
        }
        let words = count.div_ceil(self.l) as u64;
        self.t.rounds += 1;
        self.t.r.bin_triples += words;
        self.t.words += 2 * words;
    }

    fn multi_ba(&mut self, bits: usize, width: usize) {
        if bits * width == 0 {
            return;
        }
        let total = (bits * width) as u64;
        self.t.rounds += 1;
        match self.mode {
            MultiBaMode::DaBit => {
                self.t.r.dabits += bits as u64;
                self.t.r.arith_triples += total;
                self.t.words += bits.div_ceil(self.l) as u64 + 2 * total;
            }
            MultiBaMode::TwoMessage => self.t.words += 2 * total,
        }
    }

    fn reveal(&mut self, bits: usize) {
        self.t.rounds += 1;
        self.t.words += bits.div_ceil(self.l) as u64;
    }
}

fn map_step(acc: &mut Acc, n: usize, m: usize) {
    acc.comparison(n * m);
    acc.multi_ba(n * m, 1);
}

fn fetch_step(acc: &mut Acc, n: usize, m: usize) {
    let mut nodes = n;
    while nodes > 1 {
        let pairs = nodes / 2;
        acc.comparison(pairs);
        acc.multi_ba(pairs, 2 * m + 1);
        nodes = pairs + nodes % 2;
    }
}

fn stop_step(acc: &mut Acc) {
    acc.comparison(1);
    acc.reveal(1);
}

fn filter_step(acc: &mut Acc, n: usize, m: usize) {
    acc.comparison(n + n * m);
    let span = n.saturating_sub(1);
    let (mut dist, mut width) = (1, m);
    while dist < span || width > 1 {
        let scan = if dist < span { span - dist } else { 0 };
        let pairs = width / 2;
        acc.and_bits(scan + n * pairs);
        if pairs > 0 {
            width = pairs + width % 2;
        }
        dist *= 2;
    }
    acc.and_bits(2 * n);
    acc.multi_ba(n, 1);
}

impl QueryCost {
    pub fn new(ring: Ring, n: usize, m: usize, k: usize, mode: MultiBaMode) -> Self {
        let step = |f: &dyn Fn(&mut Acc)| {
            let mut acc = Acc::new(ring, mode);
            f(&mut acc);
            acc.t
        };
        let map = step(&|a| map_step(a, n, m));
        let fetch = step(&|a| fetch_step(a, n, m));
        let stop = step(&|a| stop_step(a));
        let filter = step(&|a| filter_step(a, n, m));

        let k = k as u64;
        let mut total = map;
        total.add(&fetch.scaled(k + 1));
        total.add(&stop.scaled(k + 1));
        total.add(&filter.scaled(k));

        QueryCost {
            secext: total.secext,
            rounds: total.rounds,
            map_rounds: map.rounds,
            fetch_rounds: fetch.rounds,
            stop_rounds: stop.rounds,
            filter_rounds: filter.rounds,
            bytes: total.words * ring.byte_width() as u64,
            randomness: RandomnessBudget {
                secext: total.secext,
                ..total.r
            },
        }
    }
}
