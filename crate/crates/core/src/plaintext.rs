//! Cleartext skyline: the reference the secure engine is checked against.

use crate::error::{Error, Result};

/// `n x m` non-negative integer database, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainDatabase {
    pub n: usize,
    pub m: usize,
    pub values: Vec<u64>,
    /// Declared upper bound on every attribute.
    pub bound: u64,
    /// Factor the source data was multiplied by before rounding.
    pub scale: u32,
}

impl PlainDatabase {
    /// Builds a database whose bound is its largest value.
    pub fn new(n: usize, m: usize, values: Vec<u64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Empty("database"));
        }
        if values.len() != n * m {
            return Err(Error::LengthMismatch {
                what: "database values",
                left: n * m,
                right: values.len(),
            });
        }
        let bound = values.iter().copied().max().unwrap_or(0);
        Ok(PlainDatabase {
            n,
            m,
            values,
            bound,
            scale: 1,
        })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::LengthMismatch {
                what: "row width",
                left: m,
                right: bad.len(),
            });
        }
        Self::new(rows.len(), m, rows.concat())
    }

    /// Raises the declared bound (it can never be below the data maximum).
    pub fn with_bound(mut self, bound: u64) -> Result<Self> {
        let max = self.values.iter().copied().max().unwrap_or(0);
        if bound < max {
            return Err(Error::Domain(format!(
                "declared bound {bound} is below the data maximum {max}"
            )));
        }
        self.bound = bound;
        Ok(self)
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.values.chunks(self.m)
    }
}

/// `a` dominates `b`: no worse anywhere and strictly better somewhere.
pub fn dominates(a: &[u64], b: &[u64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strict |= x < y;
    }
    strict
}

/// `|p_i[j] - q[j]|` for every cell.
pub fn map_to_query(db: &PlainDatabase, q: &[u64]) -> Vec<u64> {
    db.values
        .iter()
        .zip(q.iter().cycle())
        .map(|(&p, &q)| p.abs_diff(q))
        .collect()
}

fn check_query(db: &PlainDatabase, q: &[u64]) -> Result<()> {
    if q.len() != db.m {
        return Err(Error::LengthMismatch {
            what: "query dimension",
            left: db.m,
            right: q.len(),
        });
    }
    Ok(())
}

/// Row indices of the dynamic skyline in fetch order: repeatedly take the
/// first remaining tuple of minimum distance sum, then drop it and every
/// tuple it dominates.
pub fn plaintext_skyline_indices(db: &PlainDatabase, q: &[u64]) -> Result<Vec<usize>> {
    check_query(db, q)?;
    let m = db.m;
    let t = map_to_query(db, q);
    let sums: Vec<u64> = t.chunks(m).map(|r| r.iter().sum()).collect();
    let mut alive = vec![true; db.n];
    let mut out = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in (0..db.n).filter(|&i| alive[i]) {
            if best.is_none_or(|b| sums[i] < sums[b]) {
                best = Some(i);
            }
        }
        let Some(star) = best else { break };
        out.push(star);
        alive[star] = false;
        let ts = &t[star * m..(star + 1) * m];
        for i in 0..db.n {
            if alive[i] && dominates(ts, &t[i * m..(i + 1) * m]) {
                alive[i] = false;
            }
        }
    }
    Ok(out)
}

pub fn plaintext_skyline(db: &PlainDatabase, q: &[u64]) -> Result<Vec<Vec<u64>>> {
    Ok(plaintext_skyline_indices(db, q)?
        .into_iter()
        .map(|i| db.row(i).to_vec())
        .collect())
}

/// Row indices (ascending) not dominated by any other row in the mapped
/// space, by exhaustive pairwise checks.
pub fn brute_force_skyline_indices(db: &PlainDatabase, q: &[u64]) -> Result<Vec<usize>> {
    check_query(db, q)?;
    let m = db.m;
    let t = map_to_query(db, q);
    let row = |i: usize| &t[i * m..(i + 1) * m];
    Ok((0..db.n)
        .filter(|&i| !(0..db.n).any(|j| j != i && dominates(row(j), row(i))))
        .collect())
}

pub fn brute_force_skyline(db: &PlainDatabase, q: &[u64]) -> Result<Vec<Vec<u64>>> {
    Ok(brute_force_skyline_indices(db, q)?
        .into_iter()
        .map(|i| db.row(i).to_vec())
        .collect())
}

/// Multiset equality of row lists, ignoring order.
pub fn same_rows(a: &[Vec<u64>], b: &[Vec<u64>]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example_db() -> PlainDatabase {
        PlainDatabase::from_rows(&[vec![15, 102], vec![14, 97], vec![20, 99], vec![19, 101]]).unwrap()
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[1, 2], &[2, 3]));
        assert!(dominates(&[3, 1], &[4, 1]));
        assert!(!dominates(&[3, 1], &[3, 1]));
        assert!(!dominates(&[1, 5], &[2, 3]));
    }

    #[test]
    fn worked_example() {
        let db = example_db();
        let q = [16, 100];
        assert_eq!(map_to_query(&db, &q), vec![1, 2, 2, 3, 4, 1, 3, 1]);
        assert_eq!(
            plaintext_skyline(&db, &q).unwrap(),
            vec![vec![15, 102], vec![19, 101]]
        );
        assert_eq!(brute_force_skyline_indices(&db, &q).unwrap(), vec![0, 3]);
    }

    #[test]
    fn degenerate_inputs() {
        let one = PlainDatabase::from_rows(&[vec![4, 4]]).unwrap();
        assert_eq!(plaintext_skyline_indices(&one, &[0, 0]).unwrap(), vec![0]);
        let same = PlainDatabase::from_rows(&vec![vec![2, 3]; 4]).unwrap();
        assert_eq!(plaintext_skyline_indices(&same, &[0, 0]).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(brute_force_skyline_indices(&same, &[9, 9]).unwrap().len(), 4);
        // one dimension: only rows at the minimum distance survive
        let line = PlainDatabase::from_rows(&[vec![5], vec![9], vec![11], vec![9], vec![7]]).unwrap();
        assert_eq!(brute_force_skyline_indices(&line, &[10]).unwrap(), vec![1, 2, 3]);
        assert_eq!(plaintext_skyline_indices(&line, &[10]).unwrap(), vec![1, 2, 3]);
        assert!(plaintext_skyline(&line, &[1, 2]).is_err());
    }

    #[test]
    fn bound_checks() {
        assert!(example_db().with_bound(10).is_err());
        assert_eq!(example_db().with_bound(200).unwrap().bound, 200);
        assert!(PlainDatabase::from_rows(&[vec![1, 2], vec![3]]).is_err());
        assert!(PlainDatabase::new(0, 2, vec![]).is_err());
    }

    fn instance() -> impl Strategy<Value = (PlainDatabase, Vec<u64>)> {
        (1usize..40, 1usize..5, 1u64..20).prop_flat_map(|(n, m, b)| {
            (
                proptest::collection::vec(0..=b, n * m),
                proptest::collection::vec(0..=b, m),
            )
                .prop_map(move |(v, q)| (PlainDatabase::new(n, m, v).unwrap(), q))
        })
    }

    proptest! {
        #[test]
        fn algorithm_agrees_with_definition((db, q) in instance()) {
            let mut a = plaintext_skyline_indices(&db, &q).unwrap();
            let b = brute_force_skyline_indices(&db, &q).unwrap();
            a.sort_unstable();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn result_is_undominated_and_covering((db, q) in instance()) {
            let t = map_to_query(&db, &q);
            let m = db.m;
            let row = |i: usize| &t[i * m..(i + 1) * m];
            let sky = plaintext_skyline_indices(&db, &q).unwrap();
            for &i in &sky {
                prop_assert!((0..db.n).all(|j| !dominates(row(j), row(i))));
            }
            for i in (0..db.n).filter(|i| !sky.contains(i)) {
                prop_assert!(sky.iter().any(|&j| dominates(row(j), row(i))));
            }
        }
    }
}
