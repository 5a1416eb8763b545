//! Owner and client side sharing, and the share-file format.
//!
//! Share file: magic `SSKY1`, then `l: u8`, `n: u64`, `m: u16`,
//! `party: u8`, `scale: u32` (all little-endian), then `n*m` little-endian
//! `ceil(l/8)`-byte values, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::plaintext::PlainDatabase;
use crate::protocol::SharedDatabase;
use crate::ring::{Ring, RingElement};
use crate::sharing::{check_len, reconstruct_vec, share_vec, PartyId};

const SHARE_MAGIC: &[u8; 5] = b"SSKY1";

/// Checks that no distance sum can reach `vmax` and that `vmax` keeps all
/// comparisons in range: `m * bound < vmax <= 2^(l-2)`.
pub fn check_domain(ring: Ring, m: usize, bound: u64, vmax: RingElement) -> Result<()> {
    if ring.bits() < 3 || vmax > 1u64 << (ring.bits() - 2) {
        return Err(Error::Domain(format!(
            "vMAX {vmax} exceeds 2^(l-2) for l = {}",
            ring.bits()
        )));
    }
    let worst = (m as u128) * (bound as u128);
    if worst >= vmax as u128 {
        return Err(Error::Domain(format!(
            "m * B = {m} * {bound} = {worst} must be below vMAX = {vmax}"
        )));
    }
    Ok(())
}

/// Splits `db` into the two servers' shares after checking its bound.
pub fn share_database<R: Rng + ?Sized>(
    ring: Ring,
    db: &PlainDatabase,
    vmax: RingElement,
    rng: &mut R,
) -> Result<[SharedDatabase; 2]> {
    check_domain(ring, db.m, db.bound, vmax)?;
    let (a, b) = share_vec(ring, &db.values, rng);
    Ok([
        SharedDatabase::new(ring, PartyId::First, db.n, db.m, db.scale, a)?,
        SharedDatabase::new(ring, PartyId::Second, db.n, db.m, db.scale, b)?,
    ])
}

/// Shares a query tuple after checking `m * max(q) < vmax`.
pub fn share_query<R: Rng + ?Sized>(
    ring: Ring,
    q: &[u64],
    vmax: RingElement,
    rng: &mut R,
) -> Result<[Vec<RingElement>; 2]> {
    if q.is_empty() {
        return Err(Error::Empty("query"));
    }
    let max = q.iter().copied().max().unwrap_or(0);
    check_domain(ring, q.len(), max, vmax)?;
    let (a, b) = share_vec(ring, q, rng);
    Ok([a, b])
}

/// Reconstructs two parties' result row lists.
pub fn reconstruct_rows(ring: Ring, a: &[Vec<RingElement>], b: &[Vec<RingElement>]) -> Result<Vec<Vec<RingElement>>> {
    check_len("result rows", a.len(), b.len())?;
    a.iter().zip(b).map(|(x, y)| reconstruct_vec(ring, x, y)).collect()
}

impl SharedDatabase {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        if self.m > u16::MAX as usize {
            return Err(Error::Format(format!("m = {} does not fit the header", self.m)));
        }
        out.write_all(SHARE_MAGIC)?;
        out.write_all(&[self.ring.bits() as u8])?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&(self.m as u16).to_le_bytes())?;
        out.write_all(&[self.party.as_u8()])?;
        out.write_all(&self.scale.to_le_bytes())?;
        let bw = self.ring.byte_width();
        for v in &self.values {
            out.write_all(&v.to_le_bytes()[..bw])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut head = [0u8; 5 + 1 + 8 + 2 + 1 + 4];
        input
            .read_exact(&mut head)
            .map_err(|_| Error::Format("share file shorter than its header".into()))?;
        if &head[..5] != SHARE_MAGIC {
            return Err(Error::Format("not a share file (bad magic)".into()));
        }
        let ring = Ring::new(head[5] as u32)?;
        let n = u64::from_le_bytes(head[6..14].try_into().unwrap()) as usize;
        let m = u16::from_le_bytes(head[14..16].try_into().unwrap()) as usize;
        let party = PartyId::from_u8(head[16])?;
        let scale = u32::from_le_bytes(head[17..21].try_into().unwrap());
        let bw = ring.byte_width();
        let cells = n
            .checked_mul(m)
            .filter(|c| c.checked_mul(bw).is_some())
            .ok_or_else(|| Error::Format("share file dimensions overflow".into()))?;
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        if body.len() != cells * bw {
            return Err(Error::Format(format!(
                "expected {} value bytes for {n} x {m} shares, found {}",
                cells * bw,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(bw)
            .map(|c| {
                let mut b = [0u8; 8];
                b[..bw].copy_from_slice(c);
                let v = u64::from_le_bytes(b);
                if v & !ring.mask() != 0 {
                    return Err(Error::Format("share value exceeds ring width".into()));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        SharedDatabase::new(ring, party, n, m, scale, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::default_vmax;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn example_db() -> PlainDatabase {
        PlainDatabase::from_rows(&[vec![15, 102], vec![14, 97], vec![20, 99], vec![19, 101]]).unwrap()
    }

    #[test]
    fn share_file_round_trip() {
        let mut rng = StdRng::seed_from_u64(1);
        for bits in [12u32, 20, 64] {
            let ring = Ring::new(bits).unwrap();
            let [a, b] = share_database(ring, &example_db(), default_vmax(ring), &mut rng).unwrap();
            for share in [&a, &b] {
                let mut bytes = Vec::new();
                share.write_to(&mut bytes).unwrap();
                assert_eq!(bytes.len(), 21 + 8 * ring.byte_width());
                assert_eq!(&SharedDatabase::read_from(&bytes[..]).unwrap(), share);
            }
            let back = reconstruct_vec(ring, &a.values, &b.values).unwrap();
            assert_eq!(back, example_db().values);
        }
    }

    #[test]
    fn header_layout() {
        let ring = Ring::new(16).unwrap();
        let db = SharedDatabase::new(ring, PartyId::Second, 1, 2, 3, vec![0x0102, 7]).unwrap();
        let mut bytes = Vec::new();
        db.write_to(&mut bytes).unwrap();
        assert_eq!(
            bytes,
            [
                &b"SSKY1"[..],
                &[16],
                &1u64.to_le_bytes(),
                &2u16.to_le_bytes(),
                &[2],
                &3u32.to_le_bytes(),
                &[0x02, 0x01, 0x07, 0x00]
            ]
            .concat()
        );
    }

    #[test]
    fn corrupt_share_files_rejected() {
        assert!(SharedDatabase::read_from(&b"SSKY"[..]).is_err());
        let ring = Ring::new(8).unwrap();
        let db = SharedDatabase::new(ring, PartyId::First, 2, 1, 1, vec![1, 2]).unwrap();
        let mut bytes = Vec::new();
        db.write_to(&mut bytes).unwrap();
        assert!(SharedDatabase::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[16] = 3;
        assert!(SharedDatabase::read_from(&bad[..]).is_err());
    }

    #[test]
    fn domain_bounds_enforced() {
        let ring = Ring::new(8).unwrap();
        let vmax = default_vmax(ring);
        assert_eq!(vmax, 64);
        assert!(check_domain(ring, 2, 31, vmax).is_ok());
        assert!(check_domain(ring, 2, 32, vmax).is_err());
        assert!(check_domain(ring, 1, 1, 128).is_err());
        let mut rng = StdRng::seed_from_u64(2);
        assert!(share_database(ring, &example_db(), vmax, &mut rng).is_err());
        assert!(share_query(ring, &[40, 1], vmax, &mut rng).is_err());
        assert!(share_query(ring, &[], vmax, &mut rng).is_err());
        let [a, b] = share_query(ring, &[16, 10], vmax, &mut rng).unwrap();
        assert_eq!(reconstruct_vec(ring, &a, &b).unwrap(), vec![16, 10]);
    }
}
