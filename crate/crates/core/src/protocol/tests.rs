use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::cost::{secext_formula, QueryCost, RoundForms};
use super::*;
use crate::correlated::{budget_for_query, deal_pools};
use crate::gadgets::MultiBaMode;
use crate::plaintext::{plaintext_skyline, PlainDatabase};
use crate::runtime::channel::LocalChannel;
use crate::runtime::local::{run_pair, LocalConfig, PairRun};
use crate::sharing::{reconstruct_bits, reconstruct_vec, share_bits, share_vec};
use crate::store::{reconstruct_rows, share_database, share_query};

const Q: [u64; 2] = [16, 100];

fn example_db() -> PlainDatabase {
    PlainDatabase::from_rows(&[vec![15, 102], vec![14, 97], vec![20, 99], vec![19, 101]]).unwrap()
}

fn open(ring: Ring, run: &PairRun<Vec<u64>>) -> Vec<u64> {
    reconstruct_vec(ring, &run.outputs[0], &run.outputs[1]).unwrap()
}

struct Shared {
    db: [SharedDatabase; 2],
    q: [Vec<u64>; 2],
}

fn share(ring: Ring, db: &PlainDatabase, q: &[u64], seed: u64) -> Shared {
    let mut rng = StdRng::seed_from_u64(seed);
    let vmax = default_vmax(ring);
    Shared {
        db: share_database(ring, db, vmax, &mut rng).unwrap(),
        q: share_query(ring, q, vmax, &mut rng).unwrap(),
    }
}

fn query(cfg: &LocalConfig, db: &PlainDatabase, q: &[u64], seed: u64) -> (Vec<Vec<u64>>, PairRun<QueryOutput>) {
    let sh = share(cfg.ring, db, q, seed);
    let run = run_pair(cfg, |s| {
        let i = s.party().index();
        run_query(s, &sh.db[i], &sh.q[i])
    })
    .unwrap();
    let rows = reconstruct_rows(cfg.ring, &run.outputs[0].pool, &run.outputs[1].pool).unwrap();
    (rows, run)
}

#[test]
fn map_gives_distances() {
    let ring = Ring::default();
    let sh = share(ring, &example_db(), &Q, 1);
    let run = run_pair(&LocalConfig::new(ring), |s| {
        let i = s.party().index();
        sec_map(s, &sh.db[i], &sh.q[i])
    })
    .unwrap();
    assert_eq!(open(ring, &run), vec![1, 2, 2, 3, 4, 1, 3, 1]);
    assert_eq!(run.meters[0].secext, 8);
    assert_eq!(run.meters[0].rounds, RoundForms::new(64, 4, 2).map);
}

#[test]
fn sums_are_local_row_sums() {
    let ring = Ring::new(8).unwrap();
    assert_eq!(attribute_sums(ring, &[1, 2, 2, 3, 4, 1, 3, 1], 2), vec![3, 5, 5, 4]);
    assert_eq!(attribute_sums(ring, &[200, 100], 2), vec![44]);
}

fn fetch_plain(sums: &[u64], seed: u64) -> Fetched {
    let ring = Ring::default();
    let t = [1u64, 2, 2, 3, 4, 1, 3, 1];
    let p = example_db().values;
    let mut rng = StdRng::seed_from_u64(seed);
    let (s1, s2) = share_vec(ring, sums, &mut rng);
    let (t1, t2) = share_vec(ring, &t, &mut rng);
    let (p1, p2) = share_vec(ring, &p, &mut rng);
    let inputs = [(s1, t1, p1), (s2, t2, p2)];
    let run = run_pair(&LocalConfig::new(ring), |s| {
        let (sums, t, p) = &inputs[s.party().index()];
        sec_fetch(s, sums, t, p, 2)
    })
    .unwrap();
    let [a, b] = &run.outputs;
    Fetched {
        s_min: ring.add(a.s_min, b.s_min),
        t_star: reconstruct_vec(ring, &a.t_star, &b.t_star).unwrap(),
        p_star: reconstruct_vec(ring, &a.p_star, &b.p_star).unwrap(),
    }
}

#[test]
fn fetch_returns_minimum_tuple() {
    let f = fetch_plain(&[3, 5, 5, 4], 2);
    assert_eq!(f.s_min, 3);
    assert_eq!(f.t_star, vec![1, 2]);
    assert_eq!(f.p_star, vec![15, 102]);

    let vmax = default_vmax(Ring::default());
    let f = fetch_plain(&[vmax, vmax, 5, 4], 3);
    assert_eq!(f.s_min, 4);
    assert_eq!(f.t_star, vec![3, 1]);
    assert_eq!(f.p_star, vec![19, 101]);
}

#[test]
fn fetch_prefers_first_of_equal_sums() {
    let f = fetch_plain(&[9, 5, 5, 7], 4);
    assert_eq!(f.s_min, 5);
    assert_eq!(f.p_star, vec![14, 97]);
}

fn filter_plain(sums: &[u64], t_star: &[u64], s_min: u64, seed: u64) -> (FilterFlags, Vec<u64>) {
    let ring = Ring::default();
    let t = [1u64, 2, 2, 3, 4, 1, 3, 1];
    let mut rng = StdRng::seed_from_u64(seed);
    let (s1, s2) = share_vec(ring, sums, &mut rng);
    let (t1, t2) = share_vec(ring, &t, &mut rng);
    let (ts1, ts2) = share_vec(ring, t_star, &mut rng);
    let (m1, m2) = share_vec(ring, &[s_min], &mut rng);
    let inputs = [(s1, t1, ts1, m1[0]), (s2, t2, ts2, m2[0])];
    let run = run_pair(&LocalConfig::new(ring), |s| {
        let (sums, t, ts, sm) = &inputs[s.party().index()];
        let flags = sec_filt_flags(s, t, ts, *sm, sums)?;
        let vmax = vec![s.vmax_share(); sums.len()];
        let next = obliv_select(s, &flags.phi, &vmax, sums, 1)?;
        Ok((flags, next))
    })
    .unwrap();
    let [(fa, na), (fb, nb)] = &run.outputs;
    let bits = |x: &[bool], y: &[bool]| reconstruct_bits(x, y).unwrap();
    let flags = FilterFlags {
        sigma: bits(&fa.sigma, &fb.sigma),
        is_first: bits(&fa.is_first, &fb.is_first),
        is_domi: bits(&fa.is_domi, &fb.is_domi),
        phi: bits(&fa.phi, &fb.phi),
    };
    (flags, reconstruct_vec(ring, na, nb).unwrap())
}

#[test]
fn filter_rounds_of_worked_example() {
    let vmax = default_vmax(Ring::default());
    let (f, next) = filter_plain(&[3, 5, 5, 4], &[1, 2], 3, 5);
    assert_eq!(f.phi, vec![true, true, false, false]);
    assert_eq!(f.is_first, vec![true, false, false, false]);
    assert_eq!(next, vec![vmax, vmax, 5, 4]);

    let (f, next) = filter_plain(&[vmax, vmax, 5, 4], &[3, 1], 4, 6);
    assert_eq!(f.sigma, vec![false, false, false, true]);
    assert_eq!(f.phi, vec![false, false, true, true]);
    assert_eq!(next, vec![vmax; 4]);
}

#[test]
fn filter_marks_only_first_of_equal_minima() {
    // Three rows share the minimum sum; only the first is the fetched one.
    let (f, _) = filter_plain(&[9, 5, 5, 5], &[2, 3], 5, 7);
    assert_eq!(f.sigma, vec![false, true, true, true]);
    assert_eq!(f.is_first, vec![false, true, false, false]);
    // An equal sum never counts as dominated.
    assert!(!f.is_domi[2] && !f.is_domi[3]);
}

fn prefix_vs_sequential(sigma: &[bool], seed: u64) {
    let ring = Ring::new(16).unwrap();
    let n = sigma.len();
    // sMin = 1; sums are 1 where sigma is set and 2 elsewhere.
    let sums: Vec<u64> = sigma.iter().map(|&b| if b { 1 } else { 2 }).collect();
    let t: Vec<u64> = vec![0; n];
    let mut rng = StdRng::seed_from_u64(seed);
    let (s1, s2) = share_vec(ring, &sums, &mut rng);
    let (t1, t2) = share_vec(ring, &t, &mut rng);
    let (g1, g2) = share_bits(sigma, &mut rng);
    let inputs = [(s1, t1, g1), (s2, t2, g2)];
    let run = run_pair(&LocalConfig::new(ring), |s| {
        let (sums, t, g) = &inputs[s.party().index()];
        let p = s.party();
        let sm = if p.is_first() { 1 } else { 0 };
        let fast = sec_filt_flags(s, t, &[if p.is_first() { 7 } else { 0 }], sm, sums)?.is_first;
        let slow = first_marks_sequential(s, g)?;
        Ok((fast, slow))
    })
    .unwrap();
    let [(fa, sa), (fb, sb)] = &run.outputs;
    let fast = reconstruct_bits(fa, fb).unwrap();
    let slow = reconstruct_bits(sa, sb).unwrap();
    assert_eq!(fast, slow, "sigma = {sigma:?}");
    let expect: Vec<bool> = (0..n).map(|i| sigma[i] && !sigma[..i].contains(&true)).collect();
    assert_eq!(fast, expect);
    assert!(fast.iter().filter(|&&b| b).count() <= 1);
}

#[test]
fn prefix_form_matches_sequential_chain() {
    prefix_vs_sequential(&[true], 1);
    prefix_vs_sequential(&[false, true], 2);
    prefix_vs_sequential(&[false, false, true, true, false, true, true], 3);
    let mut rng = StdRng::seed_from_u64(9);
    for n in [5usize, 16, 33] {
        let sigma: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        prefix_vs_sequential(&sigma, n as u64);
    }
}

#[test]
fn worked_example_query() {
    let ring = Ring::default();
    let (rows, run) = query(&LocalConfig::new(ring), &example_db(), &Q, 8);
    assert_eq!(rows, vec![vec![15, 102], vec![19, 101]]);
    assert_eq!(run.outputs[0].loops, 3);
    for meter in &run.meters {
        assert_eq!(meter.secext, 44);
        assert_eq!(meter.secext, secext_formula(4, 2, 2));
        assert_eq!(meter.rounds, RoundForms::new(64, 4, 2).total(2));
        assert_eq!(meter.revealed_bits, 3);
    }
}

#[test]
fn both_modes_and_widths_agree() {
    for bits in [16u32, 32, 64] {
        let ring = Ring::new(bits).unwrap();
        for mode in [MultiBaMode::DaBit, MultiBaMode::TwoMessage] {
            let (rows, _) = query(&LocalConfig::new(ring).with_mode(mode), &example_db(), &Q, 9);
            assert_eq!(rows, vec![vec![15, 102], vec![19, 101]], "l={bits} {mode:?}");
        }
    }
}

#[test]
fn single_tuple_database() {
    let ring = Ring::default();
    let db = PlainDatabase::from_rows(&[vec![5, 5, 5]]).unwrap();
    let (rows, run) = query(&LocalConfig::new(ring), &db, &[1, 2, 3], 10);
    assert_eq!(rows, vec![vec![5, 5, 5]]);
    assert_eq!(run.meters[0].secext, secext_formula(1, 3, 1));
    assert_eq!(run.meters[0].rounds, RoundForms::new(64, 1, 3).total(1));
}

#[test]
fn query_rejects_mismatched_inputs() {
    let ring = Ring::default();
    let sh = share(ring, &example_db(), &Q, 11);
    let other = Ring::new(32).unwrap();
    let err = run_pair(&LocalConfig::new(other), |s| {
        let i = s.party().index();
        run_query(s, &sh.db[i], &sh.q[i])
    });
    assert!(matches!(err, Err(Error::WidthMismatch { .. })));
    let err = run_pair(&LocalConfig::new(ring), |s| {
        let i = s.party().index();
        run_query(s, &sh.db[i], &[1, 2, 3])
    });
    assert!(matches!(err, Err(Error::LengthMismatch { .. })));
}

fn random_instance(rng: &mut StdRng, n: usize, m: usize, bound: u64) -> (PlainDatabase, Vec<u64>) {
    let values = (0..n * m).map(|_| rng.gen_range(0..=bound)).collect();
    let db = PlainDatabase::new(n, m, values).unwrap().with_bound(bound).unwrap();
    let q = (0..m).map(|_| rng.gen_range(0..=bound)).collect();
    (db, q)
}

#[test]
fn meters_match_cost_model() {
    let mut rng = StdRng::seed_from_u64(12);
    for (bits, mode) in [(64, MultiBaMode::DaBit), (16, MultiBaMode::TwoMessage), (13, MultiBaMode::DaBit)] {
        let ring = Ring::new(bits).unwrap();
        for (n, m) in [(1usize, 1usize), (2, 1), (7, 3), (20, 4)] {
            let (db, q) = random_instance(&mut rng, n, m, 50);
            let cfg = LocalConfig::new(ring).with_mode(mode).with_seed(n as u64);
            let (rows, run) = query(&cfg, &db, &q, 13);
            let k = rows.len();
            let cost = QueryCost::new(ring, n, m, k, mode);
            let forms = RoundForms::new(bits, n, m);
            for p in 0..2 {
                let meter = &run.meters[p];
                assert_eq!(meter.rounds, cost.rounds);
                assert_eq!(meter.rounds, forms.total(k));
                assert_eq!(meter.secext, secext_formula(n, m, k));
                assert_eq!(meter.bytes_tx, cost.bytes, "l={bits} n={n} m={m}");
                assert_eq!(meter.bytes_rx, cost.bytes);
                assert_eq!(meter.phase_rounds(Phase::Map), forms.map);
                assert_eq!(meter.phase_rounds(Phase::Fetch), (k as u64 + 1) * forms.fetch);
                assert_eq!(meter.phase_rounds(Phase::Filter), k as u64 * forms.filter);
                let used = run.consumed[p];
                assert_eq!(used.arith_triples, cost.randomness.arith_triples);
                assert_eq!(used.bin_triples, cost.randomness.bin_triples);
                assert_eq!(used.dabits, cost.randomness.dabits);
            }
        }
    }
}

/// Runs a query with finite pools sized for `k_max = n`.
fn pooled_query(ring: Ring, db: &PlainDatabase, q: &[u64], seed: u64) -> Result<Vec<Vec<u64>>> {
    let mode = MultiBaMode::DaBit;
    let vmax = default_vmax(ring);
    let budget = budget_for_query(ring, db.n, db.m, db.n, mode)?;
    let (p1, p2) = deal_pools(ring, &budget, vmax, StdRng::seed_from_u64(seed));
    let sh = share(ring, db, q, seed);
    let (c1, c2) = LocalChannel::pair(Duration::ZERO);
    let s1 = Session::new(PartyId::First, ring, mode, Box::new(c1), Box::new(p1), seed);
    let s2 = Session::new(PartyId::Second, ring, mode, Box::new(c2), Box::new(p2), seed);
    let run = |mut s: Session| {
        let i = s.party().index();
        run_query(&mut s, &sh.db[i], &sh.q[i])
    };
    let (a, b) = thread::scope(|scope| {
        let h = scope.spawn(|| run(s2));
        (run(s1), h.join().unwrap())
    });
    reconstruct_rows(ring, &a?.pool, &b?.pool)
}

#[test]
fn pools_budgeted_for_all_tuples_never_run_dry() {
    let ring = Ring::default();
    // Every tuple on the skyline: the worst case for the budget.
    let rows: Vec<Vec<u64>> = (0..6).map(|i| vec![i, 5 - i]).collect();
    let db = PlainDatabase::from_rows(&rows).unwrap();
    let got = pooled_query(ring, &db, &[0, 0], 14).unwrap();
    assert_eq!(got.len(), 6);
    assert_eq!(got, plaintext_skyline(&db, &[0, 0]).unwrap());
    assert_eq!(pooled_query(ring, &example_db(), &Q, 15).unwrap().len(), 2);
}

#[test]
fn random_queries_match_oracle() {
    let mut rng = StdRng::seed_from_u64(16);
    for trial in 0..30u64 {
        let n = rng.gen_range(1..=40);
        let m = rng.gen_range(1..=4);
        // Small bounds force duplicate tuples and tied sums.
        let bound = [3u64, 10, 1000][trial as usize % 3];
        let (db, q) = random_instance(&mut rng, n, m, bound);
        let ring = if trial % 2 == 0 { Ring::default() } else { Ring::new(24).unwrap() };
        let (rows, _) = query(&LocalConfig::new(ring).with_seed(trial), &db, &q, trial);
        assert_eq!(rows, plaintext_skyline(&db, &q).unwrap(), "trial {trial}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_query_matches_oracle(
        seed in any::<u64>(),
        n in 1usize..24,
        m in 1usize..4,
        bound in 1u64..20,
    ) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (db, q) = random_instance(&mut rng, n, m, bound);
        let ring = Ring::new(16).unwrap();
        let (rows, run) = query(&LocalConfig::new(ring).with_seed(seed), &db, &q, seed);
        prop_assert_eq!(&rows, &plaintext_skyline(&db, &q).unwrap());
        prop_assert_eq!(run.meters[0].revealed_bits, rows.len() as u64 + 1);
    }
}
